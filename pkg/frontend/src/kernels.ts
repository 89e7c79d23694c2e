/**
 * kernels.ts - voxel-wise confidence and disagreement maps.
 *
 * All arithmetic is IEEE double. Per voxel the member values are sorted
 * ascending before any reduction, so member order can never change an
 * output bit, and voxels where every member agrees short-circuit to the
 * shared value instead of paying rounding for a sum-and-divide round
 * trip. Sums accumulate smallest-first in sorted order, matching the
 * core's reduction order for the ensemble sizes used in practice.
 */

import {
  type ProbabilityArray,
  type Shape3,
  checkFinite,
  checkMembers,
  checkVolume,
} from "./volume.js";

// smallest normal double: floors log(0) without moving any representable
// probability, keeping entropy exactly 0 at p in {0, 1}
const LOG_FLOOR = 2.2250738585072014e-308;

// concavity guarantees MI >= 0; anything below this is a real defect
const MI_NEGATIVE_TOLERANCE = 1e-6;

/** Binary entropy -p ln p - (1-p) ln(1-p) of one probability. */
function binaryEntropy(p: number): number {
  const q = 1.0 - p;
  const h = -(
    p * Math.log(Math.max(p, LOG_FLOOR)) +
    q * Math.log(Math.max(q, LOG_FLOOR))
  );
  return h + 0.0; // normalize -0
}

/** Binary entropy per voxel, range [0, ln 2], exact 0 at the endpoints. */
export function entropyMap(p: ProbabilityArray, shape: Shape3): Float64Array {
  const n = checkVolume("probability volume", p, shape);
  checkFinite("probability volume", p);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = binaryEntropy(p[i]);
  }
  return out;
}

function requireEnsemble(count: number, what: string): void {
  if (count < 2) {
    throw new RangeError(`${what} needs at least 2 members, got ${count}`);
  }
}

/** Voxel-wise arithmetic mean of the member probability volumes. */
export function meanPrediction(
  members: readonly ProbabilityArray[],
  shape: Shape3,
): Float64Array {
  const n = checkMembers(members, shape);
  const t = members.length;
  const out = new Float64Array(n);
  if (t === 1) {
    out.set(members[0]);
    return out;
  }
  const sorted = new Float64Array(t);
  for (let i = 0; i < n; i++) {
    for (let k = 0; k < t; k++) sorted[k] = members[k][i];
    sorted.sort();
    if (sorted[0] === sorted[t - 1]) {
      // unanimous voxel: sum/T must not cost even one bit
      out[i] = sorted[0];
      continue;
    }
    let acc = sorted[0];
    for (let k = 1; k < t; k++) acc += sorted[k];
    const mean = acc / t;
    out[i] = mean < 0.0 ? 0.0 : mean > 1.0 ? 1.0 : mean;
  }
  return out;
}

/** Mean over members of each member's own entropy map. */
export function averageEntropyMap(
  members: readonly ProbabilityArray[],
  shape: Shape3,
): Float64Array {
  const n = checkMembers(members, shape);
  const t = members.length;
  requireEnsemble(t, "average entropy");
  const out = new Float64Array(n);
  const sorted = new Float64Array(t);
  for (let i = 0; i < n; i++) {
    for (let k = 0; k < t; k++) sorted[k] = members[k][i];
    sorted.sort();
    const first = binaryEntropy(sorted[0]);
    if (sorted[0] === sorted[t - 1]) {
      // unanimous voxels average T equal entropies; keep that exact too
      out[i] = first;
      continue;
    }
    let acc = first;
    for (let k = 1; k < t; k++) acc += binaryEntropy(sorted[k]);
    out[i] = acc / t;
  }
  return out;
}

/**
 * Entropy of the mean prediction minus the average entropy (BALD).
 *
 * Zero when members agree everywhere; concavity keeps it non-negative,
 * so tiny negative float residue is clamped to 0.
 */
export function mutualInformationMap(
  members: readonly ProbabilityArray[],
  shape: Shape3,
): Float64Array {
  requireEnsemble(members.length, "mutual information");
  const mean = meanPrediction(members, shape);
  const ae = averageEntropyMap(members, shape);
  const out = new Float64Array(mean.length);
  let worst = 0.0;
  for (let i = 0; i < out.length; i++) {
    const mi = binaryEntropy(mean[i]) - ae[i];
    if (mi < worst) worst = mi;
    out[i] = mi > 0.0 ? mi : 0.0;
  }
  if (worst < -MI_NEGATIVE_TOLERANCE) {
    throw new Error(
      `mutual information fell below -${MI_NEGATIVE_TOLERANCE} ` +
        `(min ${worst}); entropy concavity violated`,
    );
  }
  return out;
}

/** Population variance of member probabilities per voxel, range [0, 0.25]. */
export function varianceMap(
  members: readonly ProbabilityArray[],
  shape: Shape3,
): Float64Array {
  const n = checkMembers(members, shape);
  const t = members.length;
  requireEnsemble(t, "variance");
  const out = new Float64Array(n);
  const sorted = new Float64Array(t);
  for (let i = 0; i < n; i++) {
    for (let k = 0; k < t; k++) sorted[k] = members[k][i];
    sorted.sort();
    let acc = sorted[0];
    for (let k = 1; k < t; k++) acc += sorted[k];
    const mean = acc / t;
    let varAcc = 0.0;
    for (let k = 0; k < t; k++) {
      const d = sorted[k] - mean;
      varAcc += d * d;
    }
    out[i] = varAcc / t;
  }
  return out;
}
