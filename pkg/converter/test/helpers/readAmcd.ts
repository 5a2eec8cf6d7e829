/** Test-side AMCD parser, independent of the writer under test. */

export interface AmcdFile {
  version: number;
  count: number;
  length: number;
  snrCount: number;
  classNames: string[];
  examples: Array<{ label: number; snr: number; bytes: Uint8Array }>;
}

export function readAmcd(buf: Uint8Array): AmcdFile {
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const magic = String.fromCharCode(buf[0], buf[1], buf[2], buf[3]);
  if (magic !== "AMCD") throw new Error(`bad magic ${magic}`);
  const version = view.getUint32(4, true);
  const count = view.getUint32(8, true);
  const length = view.getUint32(12, true);
  const classCount = view.getUint32(16, true);
  const snrCount = view.getUint32(20, true);
  let pos = 24;
  const classNames: string[] = [];
  for (let i = 0; i < classCount; i++) {
    const nameLen = view.getUint16(pos, true);
    pos += 2;
    classNames.push(new TextDecoder().decode(buf.subarray(pos, pos + nameLen)));
    pos += nameLen;
  }
  const examples = [];
  const record = 8 * length;
  for (let i = 0; i < count; i++) {
    const label = view.getUint16(pos, true);
    const snr = view.getInt16(pos + 2, true);
    pos += 4;
    examples.push({ label, snr, bytes: buf.subarray(pos, pos + record) });
    pos += record;
  }
  if (pos !== buf.length) {
    throw new Error(`file has ${buf.length - pos} trailing bytes`);
  }
  return { version, count, length, snrCount, classNames, examples };
}
