export { AdapterError, loadTables, orderedSamples } from "./tables";
export type { DatasetTables, LaneRow, SampleRow, SceneRow } from "./tables";
export { convert, convertScene, formatSummary } from "./convert";
export type { AdapterConfig, ConversionSummary } from "./convert";
