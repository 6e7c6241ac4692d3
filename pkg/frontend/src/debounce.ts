/** Trailing debounce with an explicit flush, for batching keystrokes into one sync. */

export class Debounced {
  private handle: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly fn: () => void,
    private readonly delayMs: number,
  ) {}

  schedule(): void {
    if (this.handle !== null) clearTimeout(this.handle);
    this.handle = setTimeout(() => {
      this.handle = null;
      this.fn();
    }, this.delayMs);
  }

  /** Run now if a call is pending (used before accepts so the server is current). */
  flush(): void {
    if (this.handle === null) return;
    clearTimeout(this.handle);
    this.handle = null;
    this.fn();
  }

  cancel(): void {
    if (this.handle !== null) clearTimeout(this.handle);
    this.handle = null;
  }

  get pending(): boolean {
    return this.handle !== null;
  }
}
