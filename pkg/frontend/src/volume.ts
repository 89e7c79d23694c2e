/**
 * volume.ts - shared grid types and input validation.
 *
 * Volumes are dense row-major (z, y, x) buffers: Float32Array for stored
 * probabilities, Float64Array for derived maps, Uint8Array for masks.
 * Validation errors are thrown eagerly so a bad buffer never reaches a
 * kernel loop.
 */

export type Shape3 = readonly [number, number, number];

/** A voxel coordinate as (z, y, x). */
export type Voxel = readonly [number, number, number];

export type ProbabilityArray = Float32Array | Float64Array;

/** Validate a (z, y, x) shape of positive integers; returns the voxel count. */
export function voxelCount(shape: Shape3): number {
  if (
    shape.length !== 3 ||
    !shape.every((s) => Number.isInteger(s) && s > 0)
  ) {
    throw new RangeError(
      `shape must be 3 positive integers, got ${JSON.stringify(shape)}`,
    );
  }
  return shape[0] * shape[1] * shape[2];
}

/** Check one volume buffer against its shape; returns the voxel count. */
export function checkVolume(
  name: string,
  data: { readonly length: number },
  shape: Shape3,
): number {
  const n = voxelCount(shape);
  if (data.length !== n) {
    throw new RangeError(
      `${name} length ${data.length} does not match shape ` +
        `(${shape[0]}, ${shape[1]}, ${shape[2]})`,
    );
  }
  return n;
}

/** Reject NaN and infinity anywhere in a probability buffer. */
export function checkFinite(name: string, data: ProbabilityArray): void {
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new RangeError(`${name} contains non-finite values`);
    }
  }
}

/** Validate an ensemble stack: equal-shape members, all finite. */
export function checkMembers(
  members: readonly ProbabilityArray[],
  shape: Shape3,
): number {
  if (members.length === 0) {
    throw new RangeError("empty ensemble");
  }
  const n = voxelCount(shape);
  members.forEach((m, t) => {
    checkVolume(`member ${t}`, m, shape);
    checkFinite(`member ${t}`, m);
  });
  return n;
}

/** Validate a mask buffer whose voxels must be exactly 0 or 1. */
export function checkMask(name: string, data: Uint8Array, shape: Shape3): number {
  const n = checkVolume(name, data, shape);
  for (let i = 0; i < n; i++) {
    if (data[i] > 1) {
      throw new RangeError(`${name} values must be exactly 0 or 1`);
    }
  }
  return n;
}

/** Validate structure voxels: non-empty, integer coordinates inside the grid. */
export function checkVoxels(voxels: readonly Voxel[], shape: Shape3): void {
  if (voxels.length === 0) {
    throw new RangeError("structure voxel list must be non-empty");
  }
  for (const v of voxels) {
    if (
      v.length !== 3 ||
      !v.every((c, axis) => Number.isInteger(c) && c >= 0 && c < shape[axis])
    ) {
      throw new RangeError(
        `voxel (${v.join(", ")}) outside grid ` +
          `(${shape[0]}, ${shape[1]}, ${shape[2]})`,
      );
    }
  }
}

/** Flat row-major index of a voxel. */
export function flatIndex(v: Voxel, shape: Shape3): number {
  return (v[0] * shape[1] + v[1]) * shape[2] + v[2];
}
