/**
 * swu-arrays: the swu uncertainty kernels, structure scores, and ranking
 * metrics over plain typed arrays, one flat namespace.
 */

export {
  type ProbabilityArray,
  type Shape3,
  type Voxel,
  voxelCount,
} from "./volume.js";
export {
  averageEntropyMap,
  entropyMap,
  meanPrediction,
  mutualInformationMap,
  varianceMap,
} from "./kernels.js";
export {
  CONNECTIVITIES,
  type Connectivity,
  connectedComponents,
} from "./components.js";
export {
  AGGREGATIONS,
  type Aggregation,
  aggregate,
  pairwiseDiceScore,
} from "./structures.js";
export {
  type FrocEntry,
  type FrocPoint,
  type Orientation,
  averageRecall,
  fpReduction,
  frocCurve,
  spearmanAbs,
} from "./metrics.js";
