/** Fixed-capacity ring buffer for streaming samples (last N points). */
export class RingBuffer<T> {
  private buffer: T[];
  private head = 0;
  private count = 0;

  constructor(readonly capacity: number) {
    this.buffer = new Array(capacity);
  }

  push(item: T): void {
    this.buffer[this.head] = item;
    this.head = (this.head + 1) % this.capacity;
    if (this.count < this.capacity) this.count++;
  }

  get size(): number {
    return this.count;
  }

  get(index: number): T | undefined {
    if (index < 0 || index >= this.count) return undefined;
    return this.buffer[(this.head - this.count + index + 2 * this.capacity) % this.capacity];
  }

  last(): T | undefined {
    return this.get(this.count - 1);
  }

  toArray(): T[] {
    const out: T[] = [];
    for (let i = 0; i < this.count; i++) out.push(this.get(i)!);
    return out;
  }

  clear(): void {
    this.head = 0;
    this.count = 0;
  }
}
