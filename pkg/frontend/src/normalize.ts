// Mix-weight slider normalization.
//
// Sliders move on a 0.01 grid. Display values always sum to exactly 1:
// the remainder after a slider moves is distributed across the unlocked
// sliders proportionally (largest-remainder rounding keeps the grid and the
// exact total), so the service contract (sum = 1 +- 1e-6) can never be
// violated by slider input.

export const GRANULARITY = 0.01;
const UNITS = Math.round(1 / GRANULARITY); // 100

function toUnits(x: number): number {
  return Math.max(0, Math.round(x * UNITS));
}

/** Largest-remainder apportionment of `total` units by `weights`. */
function apportion(total: number, weights: number[]): number[] {
  if (weights.length === 0) return [];
  const sum = weights.reduce((a, b) => a + b, 0);
  const shares = weights.map((w) => (sum > 0 ? (total * w) / sum : total / weights.length));
  const floors = shares.map(Math.floor);
  let left = total - floors.reduce((a, b) => a + b, 0);
  const order = shares
    .map((s, i) => ({ frac: s - Math.floor(s), i }))
    .sort((a, b) => b.frac - a.frac || a.i - b.i);
  for (let k = 0; left > 0; k = (k + 1) % order.length) {
    floors[order[k].i] += 1;
    left -= 1;
  }
  return floors;
}

/** Normalize arbitrary non-negative values onto the grid, summing to 1. */
export function normalizeAlphas(values: number[], locked: boolean[] = []): number[] {
  if (values.length === 0) return [];
  if (values.some((v) => !Number.isFinite(v))) throw new Error('non-finite mix weight');
  const lockedUnits = values.map((v, i) => (locked[i] ? Math.min(toUnits(v), UNITS) : 0));
  let lockedTotal = lockedUnits.reduce((a, b) => a + b, 0);
  if (lockedTotal > UNITS || locked.every((l, i) => i >= values.length || l) && locked.length >= values.length) {
    // over-locked: ignore locks and renormalize everything
    return normalizeAlphas(values, []);
  }
  const freeIdx = values.map((_, i) => i).filter((i) => !locked[i]);
  if (freeIdx.length === 0) return normalizeAlphas(values, []);
  const freeWeights = freeIdx.map((i) => Math.max(values[i], 0));
  const freeUnits = apportion(UNITS - lockedTotal, freeWeights);
  const out = values.map((_, i) => (locked[i] ? lockedUnits[i] : 0));
  freeIdx.forEach((i, k) => {
    out[i] = freeUnits[k];
  });
  return out.map((u) => u / UNITS);
}

/**
 * One slider moved: clamp it to the grid and redistribute the remainder
 * across the other unlocked sliders, preserving their proportions.
 */
export function redistribute(
  alphas: number[],
  changedIdx: number,
  newValue: number,
  locked: boolean[] = [],
): number[] {
  if (changedIdx < 0 || changedIdx >= alphas.length) throw new Error('bad slider index');
  const lockedUnits = alphas.map((v, i) => (locked[i] && i !== changedIdx ? toUnits(v) : 0));
  const lockedTotal = lockedUnits.reduce((a, b) => a + b, 0);
  const maxForChanged = UNITS - lockedTotal;
  let changedUnits = Math.min(toUnits(newValue), maxForChanged);

  const others = alphas.map((_, i) => i).filter((i) => i !== changedIdx && !locked[i]);
  if (others.length === 0) {
    changedUnits = maxForChanged; // nothing to redistribute to
  }
  const otherWeights = others.map((i) => Math.max(alphas[i], 0));
  const otherUnits = apportion(UNITS - lockedTotal - changedUnits, otherWeights);

  const out = alphas.map((v, i) => (locked[i] && i !== changedIdx ? lockedUnits[i] : 0));
  out[changedIdx] = changedUnits;
  others.forEach((i, k) => {
    out[i] = otherUnits[k];
  });
  return out.map((u) => u / UNITS);
}

export function equalAlphas(n: number): number[] {
  return n === 0 ? [] : apportion(UNITS, new Array(n).fill(1)).map((u) => u / UNITS);
}

export function alphasSumToOne(alphas: number[], tol = 1e-6): boolean {
  return Math.abs(alphas.reduce((a, b) => a + b, 0) - 1) <= tol;
}
