import { describe, expect, it } from 'vitest';
import {
  GRANULARITY,
  alphasSumToOne,
  equalAlphas,
  normalizeAlphas,
  redistribute,
} from '../src/normalize.js';

function sum(xs: number[]): number {
  return xs.reduce((a, b) => a + b, 0);
}

describe('alpha normalization', () => {
  it('equal split lands on the grid and sums to one', () => {
    for (const n of [1, 2, 3, 4]) {
      const alphas = equalAlphas(n);
      expect(alphas).toHaveLength(n);
      expect(Math.abs(sum(alphas) - 1)).toBeLessThan(1e-9);
      for (const a of alphas) {
        expect(Math.abs(a / GRANULARITY - Math.round(a / GRANULARITY))).toBeLessThan(1e-9);
      }
    }
    expect(equalAlphas(3)).toEqual([0.34, 0.33, 0.33]);
  });

  it('normalizes arbitrary slider values onto the simplex', () => {
    const out = normalizeAlphas([0.7, 0.7]);
    expect(Math.abs(sum(out) - 1)).toBeLessThan(1e-9);
    expect(out[0]).toBeCloseTo(0.5, 10);
  });

  it('never produces a contract-violating sum for random inputs', () => {
    let seed = 42;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2 ** 31;
      return seed / 2 ** 31;
    };
    for (let trial = 0; trial < 500; trial++) {
      const n = 1 + Math.floor(rand() * 4);
      const values = Array.from({ length: n }, () => rand() * 2);
      const out = normalizeAlphas(values);
      expect(alphasSumToOne(out)).toBe(true);
      expect(out.every((a) => a >= 0)).toBe(true);
    }
  });

  it('redistributes a slider move across the unlocked sliders', () => {
    const out = redistribute([0.34, 0.33, 0.33], 0, 0.5);
    expect(out[0]).toBeCloseTo(0.5, 10);
    expect(Math.abs(sum(out) - 1)).toBeLessThan(1e-9);
    // remaining weight split proportionally between the other two
    expect(out[1]).toBeCloseTo(0.25, 10);
    expect(out[2]).toBeCloseTo(0.25, 10);
  });

  it('respects locked sliders', () => {
    const out = redistribute([0.5, 0.3, 0.2], 0, 0.9, [false, true, false]);
    expect(out[1]).toBeCloseTo(0.3, 10); // locked stays put
    expect(Math.abs(sum(out) - 1)).toBeLessThan(1e-9);
    expect(out[0]).toBeCloseTo(0.7, 10); // clamped so locked + changed <= 1
    expect(out[2]).toBeCloseTo(0.0, 10);
  });

  it('clamps negative and oversized moves', () => {
    const down = redistribute([0.5, 0.5], 0, -0.4);
    expect(down[0]).toBe(0);
    expect(down[1]).toBe(1);
    const up = redistribute([0.5, 0.5], 1, 7.0);
    expect(up[1]).toBe(1);
    expect(up[0]).toBe(0);
  });

  it('single-slot mixes are always exactly one', () => {
    expect(redistribute([1], 0, 0.37)).toEqual([1]);
    expect(normalizeAlphas([0.2])).toEqual([1]);
  });

  it('recovers from an all-zero state', () => {
    const out = normalizeAlphas([0, 0, 0]);
    expect(Math.abs(sum(out) - 1)).toBeLessThan(1e-9);
  });

  it('rejects non-finite input', () => {
    expect(() => normalizeAlphas([NaN, 1])).toThrow();
  });
});
