/**
 * Requested-vs-actual shift estimate: argmax of the Pearson
 * cross-correlation over shifts on the sample grid, ties broken toward
 * the smallest |shift| (periodic signals alias at one signal period).
 * Mirrors the server-side evaluator so the chart's readout agrees with
 * the offline analysis.
 */

export interface LagEstimate {
  lagMs: number;
  peakCorrelation: number;
  confident: boolean;
}

function pearson(x: number[], y: number[]): number | null {
  const n = x.length;
  let mx = 0, my = 0;
  for (let i = 0; i < n; i++) { mx += x[i]; my += y[i]; }
  mx /= n; my /= n;
  let sxy = 0, sxx = 0, syy = 0;
  for (let i = 0; i < n; i++) {
    const dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy; sxx += dx * dx; syy += dy * dy;
  }
  const denom = Math.sqrt(sxx * syy);
  return denom === 0 ? null : sxy / denom;
}

export function measureLag(requested: number[], actual: number[], periodMs: number,
                           maxLagMs = 2000, minCorrelation = 0.3): LagEstimate {
  const n = requested.length;
  if (n !== actual.length) throw new Error("requested/actual length mismatch");
  if (n * periodMs < 2000) throw new Error("trace too short for lag measurement");
  const span = Math.max(...requested) - Math.min(...requested);
  if (span === 0) throw new Error("requested signal is constant; lag undefined");

  const maxShift = Math.min(Math.floor(maxLagMs / periodMs), n - 8);
  const shifts: number[] = [];
  const corrs: number[] = [];
  for (let s = -maxShift; s <= maxShift; s++) {
    const x = s >= 0 ? requested.slice(0, n - s) : requested.slice(-s);
    const y = s >= 0 ? actual.slice(s) : actual.slice(0, n + s);
    if (x.length < 8) continue;
    const c = pearson(x, y);
    if (c === null) continue;
    shifts.push(s);
    corrs.push(c);
  }
  if (corrs.length === 0) throw new Error("no usable overlap");
  const best = Math.max(...corrs);
  let bestShift = Infinity;
  for (let i = 0; i < shifts.length; i++) {
    if (corrs[i] >= best - 1e-9) {
      const s = shifts[i];
      if (Math.abs(s) < Math.abs(bestShift) ||
          (Math.abs(s) === Math.abs(bestShift) && s < bestShift)) {
        bestShift = s;
      }
    }
  }
  return {
    lagMs: bestShift * periodMs,
    peakCorrelation: best,
    confident: best >= minCorrelation,
  };
}
