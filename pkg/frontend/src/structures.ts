/**
 * structures.ts - per-structure scores over voxel coordinate lists.
 *
 * A structure is given as its voxel coordinates; aggregation reduces a
 * voxel-wise map over them, pairwise Dice measures how well binarized
 * ensemble members agree around the structure.
 */

import { type Connectivity, connectedComponents } from "./components.js";
import {
  type ProbabilityArray,
  type Shape3,
  type Voxel,
  checkMembers,
  checkVolume,
  checkVoxels,
  flatIndex,
} from "./volume.js";

// floor inside the sum-log aggregation; mirrors the log guard used by the
// voxel kernels so exact-zero uncertainties stay finite
const SUMLOG_EPS = 1e-7;

export const AGGREGATIONS = [
  "mean",
  "min",
  "max",
  "median",
  "sumlog",
] as const;

export type Aggregation = (typeof AGGREGATIONS)[number];

/** One statistic of the map values over the structure's voxels. */
export function aggregate(
  map: Float64Array,
  shape: Shape3,
  voxels: readonly Voxel[],
  aggregation: Aggregation,
): number {
  checkVolume("map", map, shape);
  checkVoxels(voxels, shape);
  const values = new Float64Array(voxels.length);
  for (let i = 0; i < voxels.length; i++) {
    values[i] = map[flatIndex(voxels[i], shape)];
  }
  switch (aggregation) {
    case "mean": {
      let acc = 0.0;
      for (let i = 0; i < values.length; i++) acc += values[i];
      return acc / values.length;
    }
    case "min": {
      let best = values[0];
      for (let i = 1; i < values.length; i++) {
        if (values[i] < best) best = values[i];
      }
      return best;
    }
    case "max": {
      let best = values[0];
      for (let i = 1; i < values.length; i++) {
        if (values[i] > best) best = values[i];
      }
      return best;
    }
    case "median": {
      // lower-middle element for even counts; no interpolation
      values.sort();
      return values[(values.length - 1) >> 1];
    }
    case "sumlog": {
      let acc = 0.0;
      for (let i = 0; i < values.length; i++) {
        if (values[i] < 0.0) {
          throw new RangeError("sum-log aggregation needs a non-negative map");
        }
        acc += Math.log(Math.max(values[i], SUMLOG_EPS));
      }
      return acc;
    }
    default:
      throw new RangeError(`unknown aggregation ${JSON.stringify(aggregation)}`);
  }
}

/**
 * Exact floating sum via non-overlapping partials, so summand order can
 * never shift the result.
 */
function exactSum(values: readonly number[]): number {
  const partials: number[] = [];
  for (let x of values) {
    let live = 0;
    for (let j = 0; j < partials.length; j++) {
      let y = partials[j];
      if (Math.abs(x) < Math.abs(y)) {
        const swap = x;
        x = y;
        y = swap;
      }
      const hi = x + y;
      const lo = y - (hi - x);
      if (lo !== 0.0) partials[live++] = lo;
      x = hi;
    }
    partials.length = live;
    partials.push(x);
  }
  let total = 0.0;
  for (const p of partials) total += p;
  return total;
}

function pairDice(si: number, sj: number, intersection: number): number {
  if (si === 0 && sj === 0) return 1.0;
  if (si === 0 || sj === 0) return 0.0;
  return (2.0 * intersection) / (si + sj);
}

/**
 * Mean Dice over all member pairs, restricted to the union component
 * containing the structure. Empty-vs-empty pairs count 1, half-empty 0.
 */
export function pairwiseDiceScore(
  members: readonly ProbabilityArray[],
  shape: Shape3,
  voxels: readonly Voxel[],
  threshold: number,
  connectivity: Connectivity = 26,
): number {
  const n = checkMembers(members, shape);
  const t = members.length;
  if (t < 2) {
    throw new RangeError("pairwise dice needs at least 2 members");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw new RangeError(`threshold must be in (0, 1), got ${threshold}`);
  }
  checkVoxels(voxels, shape);

  const masks = members.map((m) => {
    const mask = new Uint8Array(n);
    for (let i = 0; i < n; i++) mask[i] = m[i] > threshold ? 1 : 0;
    return mask;
  });
  const union = new Uint8Array(n);
  for (const mask of masks) {
    for (let i = 0; i < n; i++) union[i] |= mask[i];
  }
  const unionLabels = connectedComponents(union, shape, connectivity);

  let regionLabel = 0;
  for (const v of voxels) {
    regionLabel = unionLabels[flatIndex(v, shape)];
    if (regionLabel !== 0) break;
  }
  if (regionLabel === 0) {
    // no member marks any of these voxels: unanimous background
    return 1.0;
  }

  const sizes = new Int32Array(t);
  const intersections = new Int32Array(t * t);
  const present: number[] = [];
  for (let i = 0; i < n; i++) {
    if (unionLabels[i] !== regionLabel) continue;
    present.length = 0;
    for (let k = 0; k < t; k++) {
      if (masks[k][i] === 1) {
        sizes[k]++;
        present.push(k);
      }
    }
    for (let a = 0; a < present.length; a++) {
      for (let b = a + 1; b < present.length; b++) {
        intersections[present[a] * t + present[b]]++;
      }
    }
  }

  const pairScores: number[] = [];
  for (let i = 0; i < t; i++) {
    for (let j = i + 1; j < t; j++) {
      pairScores.push(pairDice(sizes[i], sizes[j], intersections[i * t + j]));
    }
  }
  return exactSum(pairScores) / pairScores.length;
}
