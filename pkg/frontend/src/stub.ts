/**
 * Deterministic conformance stub: the positive score is the fraction of
 * tokens equal to "good". A single double division keeps the arithmetic
 * bit-identical across independent implementations; empty rows score 0.
 */
export const STUB_CLASSES = ["neg", "pos"];

export function stubScores(batch: string[][]): number[][] {
  return batch.map((row) => {
    const frac =
      row.length === 0
        ? 0
        : row.filter((token) => String(token) === "good").length / row.length;
    return [1 - frac, frac];
  });
}
