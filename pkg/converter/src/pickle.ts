/**
 * Minimal pickle-stream reader.
 *
 * Covers the opcode subset that legacy Python 2 cPickle and modern Python 3
 * pickle (protocols 0 through 5, in-band buffers only) emit for plain
 * containers, numbers, strings and numpy ndarrays. That is exactly what the
 * distributed RML2016 archives contain: a dict keyed by (name, snr) tuples
 * whose values are float32 ndarrays.
 *
 * Design notes:
 * - Python 2 byte strings (STRING / BINSTRING / SHORT_BINSTRING) decode to
 *   Uint8Array, matching pickle.loads(..., encoding="bytes"). Raw ndarray
 *   payloads arrive through those opcodes, so they must stay bytes.
 * - Tuples and lists both become plain arrays; the distinction does not
 *   matter for reading these archives.
 * - Dicts become Map instances. Tuple keys are kept by object identity,
 *   which is fine because callers only iterate entries.
 * - Class references (GLOBAL / STACK_GLOBAL) resolve to lightweight symbol
 *   records. Only the handful needed to rebuild ndarrays are executable;
 *   REDUCE on anything else raises a clear error.
 */

export class PickleError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "PickleError";
  }
}

/** Reference to a Python class or function named by the stream. */
export interface GlobalRef {
  module: string;
  name: string;
}

/** Placeholder for numpy.dtype built via REDUCE + BUILD. */
export class DType {
  /** type code without byte order, e.g. "f4" */
  descr: string;
  /** "<", ">", "=" or "|" */
  byteorder: string;

  constructor(descr: string, byteorder = "=") {
    this.descr = descr;
    this.byteorder = byteorder;
  }
}

/** Reconstructed numpy array: metadata plus the raw little/big endian bytes. */
export class NdArray {
  shape: number[] = [];
  dtype: DType | null = null;
  fortranOrder = false;
  data: Uint8Array = new Uint8Array(0);
}

const RECONSTRUCT_MODULES = new Set([
  "numpy.core.multiarray",
  "numpy._core.multiarray",
]);

function isNdarrayClass(ref: GlobalRef): boolean {
  return ref.name === "ndarray" &&
    (ref.module === "numpy" || RECONSTRUCT_MODULES.has(ref.module));
}

function isDtypeClass(ref: GlobalRef): boolean {
  return ref.name === "dtype" &&
    (ref.module === "numpy" || RECONSTRUCT_MODULES.has(ref.module));
}

/** Decode bytes as latin1, the identity byte-to-code-point mapping. */
export function latin1(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i++) {
    out += String.fromCharCode(bytes[i]);
  }
  return out;
}

function latin1Encode(text: string): Uint8Array {
  const out = new Uint8Array(text.length);
  for (let i = 0; i < text.length; i++) {
    const code = text.charCodeAt(i);
    if (code > 0xff) {
      throw new PickleError(`cannot latin1-encode code point ${code}`);
    }
    out[i] = code;
  }
  return out;
}

function asDescrString(value: unknown): string {
  if (typeof value === "string") return value;
  if (value instanceof Uint8Array) return latin1(value);
  throw new PickleError(`dtype descriptor is ${typeof value}, expected string`);
}

/** Marker object used to delimit MARK ... <items> sequences on the stack. */
const MARK = Symbol("mark");

const textDecoder = new TextDecoder("utf-8", { fatal: true });

export class Unpickler {
  private pos = 0;
  private readonly view: DataView;
  private readonly stack: unknown[] = [];
  private readonly memo = new Map<number, unknown>();
  private stopped = false;
  private result: unknown = undefined;

  constructor(private readonly buf: Uint8Array) {
    this.view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  }

  load(): unknown {
    while (!this.stopped) {
      if (this.pos >= this.buf.length) {
        throw new PickleError("stream ended before STOP opcode");
      }
      const op = this.buf[this.pos++];
      this.dispatch(op);
    }
    return this.result;
  }

  // ---- byte readers ----

  private need(n: number): number {
    if (this.pos + n > this.buf.length) {
      throw new PickleError(
        `stream truncated: need ${n} bytes at offset ${this.pos}, ` +
        `have ${this.buf.length - this.pos}`,
      );
    }
    const at = this.pos;
    this.pos += n;
    return at;
  }

  private u8(): number { return this.view.getUint8(this.need(1)); }
  private u16(): number { return this.view.getUint16(this.need(2), true); }
  private i32(): number { return this.view.getInt32(this.need(4), true); }
  private u32(): number { return this.view.getUint32(this.need(4), true); }

  private u64(): number {
    const at = this.need(8);
    const big = this.view.getBigUint64(at, true);
    if (big > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new PickleError(`64-bit length ${big} exceeds safe integer range`);
    }
    return Number(big);
  }

  private bytes(n: number): Uint8Array {
    const at = this.need(n);
    // Subarray, not copy: ndarray payloads can be hundreds of MB.
    return this.buf.subarray(at, at + n);
  }

  private line(): string {
    const start = this.pos;
    while (this.pos < this.buf.length && this.buf[this.pos] !== 0x0a) {
      this.pos++;
    }
    if (this.pos >= this.buf.length) {
      throw new PickleError("unterminated text opcode argument");
    }
    const text = latin1(this.buf.subarray(start, this.pos));
    this.pos++; // consume newline
    return text;
  }

  // ---- stack helpers ----

  private pop(): unknown {
    if (this.stack.length === 0) {
      throw new PickleError("stack underflow");
    }
    return this.stack.pop();
  }

  private top(): unknown {
    if (this.stack.length === 0) {
      throw new PickleError("stack underflow");
    }
    return this.stack[this.stack.length - 1];
  }

  /** Pop everything above the nearest MARK, returning items in push order. */
  private popToMark(): unknown[] {
    const at = this.stack.lastIndexOf(MARK);
    if (at < 0) {
      throw new PickleError("MARK expected but not found");
    }
    const items = this.stack.splice(at + 1);
    this.stack.pop(); // the mark itself
    return items;
  }

  private memoGet(key: number): void {
    if (!this.memo.has(key)) {
      throw new PickleError(`memo key ${key} not set`);
    }
    this.stack.push(this.memo.get(key));
  }

  // ---- value builders ----

  private parseTextInt(text: string): unknown {
    if (text === "01") return true;
    if (text === "00") return false;
    const cleaned = text.endsWith("L") ? text.slice(0, -1) : text;
    const value = Number(cleaned);
    if (!Number.isSafeInteger(value)) {
      throw new PickleError(`integer literal out of safe range: ${text}`);
    }
    return value;
  }

  private longFromBytes(raw: Uint8Array): number {
    // Two's complement little endian, arbitrary width.
    if (raw.length === 0) return 0;
    let value = 0n;
    for (let i = raw.length - 1; i >= 0; i--) {
      value = (value << 8n) | BigInt(raw[i]);
    }
    if (raw[raw.length - 1] & 0x80) {
      value -= 1n << BigInt(8 * raw.length);
    }
    if (value > BigInt(Number.MAX_SAFE_INTEGER) ||
        value < BigInt(Number.MIN_SAFE_INTEGER)) {
      throw new PickleError(`integer ${value} exceeds safe range`);
    }
    return Number(value);
  }

  private unescapePy2String(text: string): Uint8Array {
    if (text.length < 2) {
      throw new PickleError(`malformed STRING literal: ${text}`);
    }
    const quote = text[0];
    if ((quote !== "'" && quote !== '"') || text[text.length - 1] !== quote) {
      throw new PickleError(`malformed STRING literal: ${text}`);
    }
    const body = text.slice(1, -1);
    const out: number[] = [];
    for (let i = 0; i < body.length; i++) {
      const ch = body[i];
      if (ch !== "\\") {
        out.push(ch.charCodeAt(0) & 0xff);
        continue;
      }
      const esc = body[++i];
      switch (esc) {
        case "\\": out.push(0x5c); break;
        case "'": out.push(0x27); break;
        case '"': out.push(0x22); break;
        case "n": out.push(0x0a); break;
        case "r": out.push(0x0d); break;
        case "t": out.push(0x09); break;
        case "0": out.push(0x00); break;
        case "x":
          out.push(parseInt(body.slice(i + 1, i + 3), 16));
          i += 2;
          break;
        default:
          throw new PickleError(`unsupported string escape \\${esc}`);
      }
    }
    return new Uint8Array(out);
  }

  private unescapeUnicodeLine(text: string): string {
    return text.replace(/\\u([0-9a-fA-F]{4})|\\\\/g, (match, hex) =>
      hex ? String.fromCharCode(parseInt(hex, 16)) : "\\");
  }

  // ---- the class / callable registry ----

  private resolveGlobal(module: string, name: string): GlobalRef {
    return { module, name };
  }

  private applyReduce(callable: unknown, args: unknown): unknown {
    const ref = callable as GlobalRef;
    if (!ref || typeof ref.module !== "string") {
      throw new PickleError("REDUCE callable is not a class reference");
    }
    if (!Array.isArray(args)) {
      throw new PickleError(`REDUCE arguments for ${ref.module}.${ref.name} are not a tuple`);
    }
    if (RECONSTRUCT_MODULES.has(ref.module) && ref.name === "_reconstruct") {
      // _reconstruct(ndarray, (0,), b'b') allocates an empty array;
      // the interesting state arrives later through BUILD.
      return new NdArray();
    }
    if (isDtypeClass(ref)) {
      return new DType(asDescrString(args[0]));
    }
    if (ref.name === "_frombuffer" &&
        (ref.module === "numpy.core.numeric" || ref.module === "numpy._core.numeric")) {
      // _frombuffer(data, dtype, shape, order) arrives fully built.
      const [data, dtype, shape, order] = args;
      if (!(data instanceof Uint8Array) || !(dtype instanceof DType) || !Array.isArray(shape)) {
        throw new PickleError("malformed _frombuffer arguments");
      }
      const array = new NdArray();
      array.data = data;
      array.dtype = dtype;
      array.shape = shape as number[];
      array.fortranOrder = order === "F";
      return array;
    }
    if (ref.module === "_codecs" && ref.name === "encode") {
      const text = args[0];
      const codec = args.length > 1 ? args[1] : "latin1";
      if (typeof text !== "string") {
        throw new PickleError("_codecs.encode argument is not a string");
      }
      if (codec !== "latin1" && codec !== "latin-1") {
        throw new PickleError(`unsupported codec ${String(codec)}`);
      }
      return latin1Encode(text);
    }
    throw new PickleError(`cannot execute ${ref.module}.${ref.name}`);
  }

  private applyNewobj(cls: unknown, args: unknown[]): unknown {
    const ref = cls as GlobalRef;
    if (ref && typeof ref.module === "string" && isNdarrayClass(ref)) {
      return new NdArray();
    }
    if (ref && typeof ref.module === "string" && isDtypeClass(ref)) {
      return new DType(asDescrString(args[0]));
    }
    throw new PickleError(
      `cannot instantiate ${ref ? `${ref.module}.${ref.name}` : typeof cls}`,
    );
  }

  private applyBuild(obj: unknown, state: unknown): void {
    if (obj instanceof NdArray) {
      if (!Array.isArray(state)) {
        throw new PickleError("ndarray BUILD state is not a tuple");
      }
      // (version, shape, dtype, fortran, data) or the versionless 4-tuple.
      const fields = state.length === 5 ? state.slice(1) : state;
      if (fields.length !== 4) {
        throw new PickleError(`ndarray BUILD state has ${state.length} fields`);
      }
      const [shape, dtype, fortran, data] = fields;
      if (!Array.isArray(shape) || !shape.every((d) => Number.isSafeInteger(d))) {
        throw new PickleError("ndarray shape is not a tuple of integers");
      }
      if (!(dtype instanceof DType)) {
        throw new PickleError("ndarray BUILD state carries no dtype");
      }
      if (!(data instanceof Uint8Array)) {
        throw new PickleError(
          "ndarray payload is not raw bytes (object arrays are not supported)",
        );
      }
      obj.shape = shape as number[];
      obj.dtype = dtype;
      obj.fortranOrder = Boolean(fortran);
      obj.data = data;
      return;
    }
    if (obj instanceof DType) {
      // (version, byteorder, subdescr, names, fields, elsize, alignment, flags)
      if (!Array.isArray(state) || state.length < 2 || typeof asDescrString(state[1]) !== "string") {
        throw new PickleError("dtype BUILD state is malformed");
      }
      obj.byteorder = asDescrString(state[1]);
      return;
    }
    if (obj instanceof Map && state instanceof Map) {
      for (const [k, v] of state) obj.set(k, v);
      return;
    }
    throw new PickleError(`BUILD on unsupported object ${String(obj)}`);
  }

  // ---- opcode dispatch ----

  private dispatch(op: number): void {
    switch (op) {
      case 0x80: { // PROTO
        const version = this.u8();
        if (version > 5) {
          throw new PickleError(`unsupported pickle protocol ${version}`);
        }
        break;
      }
      case 0x95: // FRAME: length prefix only, content is inline
        this.u64();
        break;
      case 0x2e: // STOP '.'
        this.result = this.pop();
        this.stopped = true;
        break;

      // marks and plain containers
      case 0x28: this.stack.push(MARK); break; // '('
      case 0x7d: this.stack.push(new Map()); break; // '}' EMPTY_DICT
      case 0x64: { // 'd' DICT
        const items = this.popToMark();
        const dict = new Map();
        for (let i = 0; i + 1 < items.length; i += 2) {
          dict.set(items[i], items[i + 1]);
        }
        this.stack.push(dict);
        break;
      }
      case 0x73: { // 's' SETITEM
        const value = this.pop();
        const key = this.pop();
        (this.top() as Map<unknown, unknown>).set(key, value);
        break;
      }
      case 0x75: { // 'u' SETITEMS
        const items = this.popToMark();
        const dict = this.top() as Map<unknown, unknown>;
        for (let i = 0; i + 1 < items.length; i += 2) {
          dict.set(items[i], items[i + 1]);
        }
        break;
      }
      case 0x5d: this.stack.push([]); break; // ']' EMPTY_LIST
      case 0x6c: this.stack.push(this.popToMark()); break; // 'l' LIST
      case 0x61: { // 'a' APPEND
        const value = this.pop();
        (this.top() as unknown[]).push(value);
        break;
      }
      case 0x65: { // 'e' APPENDS
        const items = this.popToMark();
        (this.top() as unknown[]).push(...items);
        break;
      }
      case 0x29: this.stack.push([]); break; // ')' EMPTY_TUPLE
      case 0x74: this.stack.push(this.popToMark()); break; // 't' TUPLE
      case 0x85: this.stack.push([this.pop()]); break; // TUPLE1
      case 0x86: { // TUPLE2
        const b = this.pop();
        const a = this.pop();
        this.stack.push([a, b]);
        break;
      }
      case 0x87: { // TUPLE3
        const c = this.pop();
        const b = this.pop();
        const a = this.pop();
        this.stack.push([a, b, c]);
        break;
      }
      case 0x30: this.pop(); break; // '0' POP
      case 0x31: this.popToMark(); break; // '1' POP_MARK
      case 0x32: this.stack.push(this.top()); break; // '2' DUP

      // constants and numbers
      case 0x4e: this.stack.push(null); break; // 'N' NONE
      case 0x88: this.stack.push(true); break; // NEWTRUE
      case 0x89: this.stack.push(false); break; // NEWFALSE
      case 0x4a: this.stack.push(this.i32()); break; // 'J' BININT
      case 0x4b: this.stack.push(this.u8()); break; // 'K' BININT1
      case 0x4d: this.stack.push(this.u16()); break; // 'M' BININT2
      case 0x8a: this.stack.push(this.longFromBytes(this.bytes(this.u8()))); break; // LONG1
      case 0x8b: this.stack.push(this.longFromBytes(this.bytes(this.u32()))); break; // LONG4
      case 0x49: this.stack.push(this.parseTextInt(this.line())); break; // 'I' INT
      case 0x4c: this.stack.push(this.parseTextInt(this.line())); break; // 'L' LONG
      case 0x47: { // 'G' BINFLOAT: big endian double
        const at = this.need(8);
        this.stack.push(this.view.getFloat64(at, false));
        break;
      }
      case 0x46: this.stack.push(Number(this.line())); break; // 'F' FLOAT

      // strings and bytes
      case 0x55: this.stack.push(this.bytes(this.u8())); break; // SHORT_BINSTRING
      case 0x54: this.stack.push(this.bytes(this.u32())); break; // 'T' BINSTRING
      case 0x53: this.stack.push(this.unescapePy2String(this.line())); break; // 'S' STRING
      case 0x58: this.stack.push(textDecoder.decode(this.bytes(this.u32()))); break; // 'X' BINUNICODE
      case 0x8c: this.stack.push(textDecoder.decode(this.bytes(this.u8()))); break; // SHORT_BINUNICODE
      case 0x8d: this.stack.push(textDecoder.decode(this.bytes(this.u64()))); break; // BINUNICODE8
      case 0x56: this.stack.push(this.unescapeUnicodeLine(this.line())); break; // 'V' UNICODE
      case 0x42: this.stack.push(this.bytes(this.u32())); break; // 'B' BINBYTES
      case 0x43: this.stack.push(this.bytes(this.u8())); break; // 'C' SHORT_BINBYTES
      case 0x8e: this.stack.push(this.bytes(this.u64())); break; // BINBYTES8
      case 0x96: this.stack.push(this.bytes(this.u64())); break; // BYTEARRAY8

      // memo
      case 0x71: this.memo.set(this.u8(), this.top()); break; // 'q' BINPUT
      case 0x72: this.memo.set(this.u32(), this.top()); break; // 'r' LONG_BINPUT
      case 0x70: this.memo.set(Number(this.line()), this.top()); break; // 'p' PUT
      case 0x94: this.memo.set(this.memo.size, this.top()); break; // MEMOIZE
      case 0x68: this.memoGet(this.u8()); break; // 'h' BINGET
      case 0x6a: this.memoGet(this.u32()); break; // 'j' LONG_BINGET
      case 0x67: this.memoGet(Number(this.line())); break; // 'g' GET

      // class references and object reconstruction
      case 0x63: { // 'c' GLOBAL
        const module = this.line();
        const name = this.line();
        this.stack.push(this.resolveGlobal(module, name));
        break;
      }
      case 0x93: { // STACK_GLOBAL
        const name = this.pop();
        const module = this.pop();
        if (typeof module !== "string" || typeof name !== "string") {
          throw new PickleError("STACK_GLOBAL arguments are not strings");
        }
        this.stack.push(this.resolveGlobal(module, name));
        break;
      }
      case 0x52: { // 'R' REDUCE
        const args = this.pop();
        const callable = this.pop();
        this.stack.push(this.applyReduce(callable, args));
        break;
      }
      case 0x81: { // NEWOBJ
        const args = this.pop();
        const cls = this.pop();
        this.stack.push(this.applyNewobj(cls, args as unknown[]));
        break;
      }
      case 0x92: { // NEWOBJ_EX
        const kwargs = this.pop();
        const args = this.pop();
        const cls = this.pop();
        if (kwargs instanceof Map && kwargs.size > 0) {
          throw new PickleError("NEWOBJ_EX with keyword arguments is not supported");
        }
        this.stack.push(this.applyNewobj(cls, args as unknown[]));
        break;
      }
      case 0x62: { // 'b' BUILD
        const state = this.pop();
        this.applyBuild(this.top(), state);
        break;
      }

      default:
        throw new PickleError(
          `unsupported opcode 0x${op.toString(16).padStart(2, "0")} at offset ${this.pos - 1}`,
        );
    }
  }
}

/** Load the single top level object from a pickle byte stream. */
export function loads(buf: Uint8Array): unknown {
  return new Unpickler(buf).load();
}
