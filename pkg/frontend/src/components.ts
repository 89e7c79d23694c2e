/**
 * components.ts - connected components of 3D binary masks.
 *
 * Components are labeled 1..K by first-encounter order in a row-major
 * (z, y, x) scan, so the label array is a pure function of the mask
 * bytes and the connectivity. This matches the core's labeling exactly;
 * parity is bitwise on the Int32Array.
 */

import { type Shape3, checkMask } from "./volume.js";

export const CONNECTIVITIES = [6, 18, 26] as const;

export type Connectivity = (typeof CONNECTIVITIES)[number];

/** Neighbor offsets (dz, dy, dx) for a 6/18/26 neighborhood. */
function neighborOffsets(connectivity: Connectivity): Int32Array {
  if (!CONNECTIVITIES.includes(connectivity)) {
    throw new RangeError(
      `connectivity must be one of ${CONNECTIVITIES.join(", ")}, ` +
        `got ${connectivity}`,
    );
  }
  const offsets: number[] = [];
  for (let dz = -1; dz <= 1; dz++) {
    for (let dy = -1; dy <= 1; dy++) {
      for (let dx = -1; dx <= 1; dx++) {
        const manhattan = Math.abs(dz) + Math.abs(dy) + Math.abs(dx);
        if (manhattan === 0) continue;
        if (connectivity === 6 && manhattan > 1) continue;
        if (connectivity === 18 && manhattan > 2) continue;
        offsets.push(dz, dy, dx);
      }
    }
  }
  return Int32Array.from(offsets);
}

/**
 * Label the connected components of a mask.
 *
 * Returns an Int32Array of the same length as the mask: 0 background,
 * 1..K the component containing each foreground voxel.
 */
export function connectedComponents(
  mask: Uint8Array,
  shape: Shape3,
  connectivity: Connectivity = 26,
): Int32Array {
  const n = checkMask("mask", mask, shape);
  const offsets = neighborOffsets(connectivity);
  const [nz, ny, nx] = shape;
  const labels = new Int32Array(n);
  const queue = new Int32Array(n);
  let nextLabel = 0;
  for (let seed = 0; seed < n; seed++) {
    if (mask[seed] === 0 || labels[seed] !== 0) continue;
    nextLabel++;
    labels[seed] = nextLabel;
    queue[0] = seed;
    let head = 0;
    let tail = 1;
    while (head < tail) {
      const idx = queue[head++];
      const z = Math.floor(idx / (ny * nx));
      const y = Math.floor((idx - z * ny * nx) / nx);
      const x = idx - (z * ny + y) * nx;
      for (let o = 0; o < offsets.length; o += 3) {
        const zz = z + offsets[o];
        const yy = y + offsets[o + 1];
        const xx = x + offsets[o + 2];
        if (zz < 0 || zz >= nz || yy < 0 || yy >= ny || xx < 0 || xx >= nx) {
          continue;
        }
        const nIdx = (zz * ny + yy) * nx + xx;
        if (mask[nIdx] === 1 && labels[nIdx] === 0) {
          labels[nIdx] = nextLabel;
          queue[tail++] = nIdx;
        }
      }
    }
  }
  return labels;
}
