export { loads, Unpickler, PickleError, NdArray, DType, latin1 } from "./pickle.js";
export {
  CANONICAL_CLASS_ORDER,
  SEQUENCE_LENGTH,
  BYTES_PER_EXAMPLE,
  ArchiveError,
  canonicalName,
  parseArchive,
  planConversion,
} from "./rml.js";
export type { RmlEntry, ConversionPlan } from "./rml.js";
export { AMCD_MAGIC, AMCD_VERSION, amcdByteSize, encodeAmcd } from "./amcd.js";
export { main, parseArgs, runConvert } from "./cli.js";
