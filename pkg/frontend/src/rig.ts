/**
 * Rig JSON parsing, validation, and client-side blending.
 *
 * The file format mirrors the binary rig container: geometry arrays are
 * base64 of little-endian float32/uint32 data, and every expression carries
 * an FNV-1a 32-bit checksum of `fround(neutral[i] + delta[i])` so the
 * client can prove its blending is bit-exact.
 */

export interface Eyeball {
  center: [number, number, number];
  radius: number;
  inset: number;
  region: number[];
}

export interface ViewerRig {
  vertexCount: number;
  faceCount: number;
  names: string[];
  neutral: Float32Array; // 3V interleaved x y z
  faces: Uint32Array; // 3F
  deltas: Float32Array[]; // m arrays of 3V
  checksums: string[]; // per expression, as shipped
  neutralChecksum: string;
  eyeballs: Eyeball[];
  texture?: string;
}

/** Any structural problem with a rig file: bad JSON, wrong magic or
 * version, truncated or inconsistent arrays. */
export class RigFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "RigFormatError";
  }
}

export const RIG_MAGIC = "CFR1";
export const RIG_VERSION = 1;

function b64ToBytes(b64: string, what: string): Uint8Array {
  let bin: string;
  try {
    bin = atob(b64);
  } catch {
    throw new RigFormatError(`${what}: invalid base64`);
  }
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

const HOST_LITTLE_ENDIAN =
  new Uint8Array(new Uint32Array([1]).buffer)[0] === 1;

function decodeF32(b64: string, expected: number, what: string): Float32Array {
  const bytes = b64ToBytes(b64, what);
  if (bytes.length !== expected * 4) {
    throw new RigFormatError(
      `${what}: expected ${expected * 4} bytes, got ${bytes.length}`
    );
  }
  if (HOST_LITTLE_ENDIAN) {
    return new Float32Array(bytes.buffer, 0, expected);
  }
  const dv = new DataView(bytes.buffer);
  const out = new Float32Array(expected);
  for (let i = 0; i < expected; i++) out[i] = dv.getFloat32(i * 4, true);
  return out;
}

function decodeU32(b64: string, expected: number, what: string): Uint32Array {
  const bytes = b64ToBytes(b64, what);
  if (bytes.length !== expected * 4) {
    throw new RigFormatError(
      `${what}: expected ${expected * 4} bytes, got ${bytes.length}`
    );
  }
  if (HOST_LITTLE_ENDIAN) {
    return new Uint32Array(bytes.buffer, 0, expected);
  }
  const dv = new DataView(bytes.buffer);
  const out = new Uint32Array(expected);
  for (let i = 0; i < expected; i++) out[i] = dv.getUint32(i * 4, true);
  return out;
}

export function fnv1a32(bytes: Uint8Array): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i];
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** FNV-1a of the little-endian bytes of a float32 buffer, as 8 hex digits. */
export function checksumHex(values: Float32Array): string {
  let bytes: Uint8Array;
  if (HOST_LITTLE_ENDIAN) {
    bytes = new Uint8Array(values.buffer, values.byteOffset, values.byteLength);
  } else {
    bytes = new Uint8Array(values.length * 4);
    const dv = new DataView(bytes.buffer);
    for (let i = 0; i < values.length; i++) dv.setFloat32(i * 4, values[i], true);
  }
  return fnv1a32(bytes).toString(16).padStart(8, "0");
}

function requireInt(value: unknown, what: string): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value < 0) {
    throw new RigFormatError(`${what} must be a non-negative integer`);
  }
  return value;
}

function requireChecksum(value: unknown, what: string): string {
  if (typeof value !== "string" || !/^[0-9a-f]{8}$/.test(value)) {
    throw new RigFormatError(`${what} must be 8 lowercase hex digits`);
  }
  return value;
}

export function parseRig(text: string): ViewerRig {
  let doc: any;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new RigFormatError(`not valid JSON: ${(e as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null) {
    throw new RigFormatError("rig file must contain a JSON object");
  }
  if (doc.magic !== RIG_MAGIC) {
    throw new RigFormatError(`bad magic ${JSON.stringify(doc.magic)}`);
  }
  if (doc.version !== RIG_VERSION) {
    throw new RigFormatError(`unsupported rig version ${doc.version}`);
  }
  const vertexCount = requireInt(doc.vertex_count, "vertex_count");
  const faceCount = requireInt(doc.face_count, "face_count");
  if (!Array.isArray(doc.names) || doc.names.some((n: unknown) => typeof n !== "string" || !n)) {
    throw new RigFormatError("names must be non-empty strings");
  }
  const names: string[] = doc.names;
  if (new Set(names).size !== names.length) {
    throw new RigFormatError("expression names must be distinct");
  }

  const neutral = decodeF32(String(doc.neutral ?? ""), 3 * vertexCount, "neutral");
  const neutralChecksum = requireChecksum(doc.neutral_checksum, "neutral_checksum");
  if (checksumHex(neutral) !== neutralChecksum) {
    throw new RigFormatError("neutral buffer does not match its checksum");
  }

  const faces = decodeU32(String(doc.faces ?? ""), 3 * faceCount, "faces");
  for (let i = 0; i < faces.length; i++) {
    if (faces[i] >= vertexCount) {
      throw new RigFormatError(`face index ${faces[i]} outside ${vertexCount} vertices`);
    }
  }

  if (!Array.isArray(doc.expressions) || doc.expressions.length !== names.length) {
    throw new RigFormatError(
      `expected ${names.length} expressions, got ${doc.expressions?.length ?? "none"}`
    );
  }
  const deltas: Float32Array[] = [];
  const checksums: string[] = [];
  doc.expressions.forEach((entry: any, i: number) => {
    if (typeof entry !== "object" || entry === null || entry.name !== names[i]) {
      throw new RigFormatError(`expression ${i} name disagrees with the names list`);
    }
    deltas.push(decodeF32(String(entry.deltas ?? ""), 3 * vertexCount, `expression ${i}`));
    checksums.push(requireChecksum(entry.checksum, `expression ${i} checksum`));
  });

  const eyeballs: Eyeball[] = [];
  if (doc.eyeballs !== undefined) {
    if (!Array.isArray(doc.eyeballs)) throw new RigFormatError("eyeballs must be a list");
    for (const e of doc.eyeballs) {
      if (
        !Array.isArray(e?.center) || e.center.length !== 3 ||
        e.center.some((c: unknown) => typeof c !== "number") ||
        typeof e.radius !== "number" || e.radius <= 0 ||
        typeof e.inset !== "number" || !Array.isArray(e.region)
      ) {
        throw new RigFormatError("malformed eyeball entry");
      }
      const region = e.region.map((i: unknown) => requireInt(i, "eyeball region index"));
      if (region.some((i: number) => i >= vertexCount)) {
        throw new RigFormatError("eyeball region index outside the mesh");
      }
      eyeballs.push({
        center: [e.center[0], e.center[1], e.center[2]],
        radius: e.radius,
        inset: e.inset,
        region,
      });
    }
  }

  const rig: ViewerRig = {
    vertexCount,
    faceCount,
    names,
    neutral,
    faces,
    deltas,
    checksums,
    neutralChecksum,
    eyeballs,
  };
  if (doc.texture !== undefined) {
    if (typeof doc.texture !== "string") throw new RigFormatError("texture must be a string");
    rig.texture = doc.texture;
  }
  return rig;
}

/**
 * Blend in float32: out = neutral, then out += beta_i * delta_i per active
 * expression. Each store rounds once to float32, so a single slider at 1
 * reproduces the shipped checksum bit-for-bit. Zero weights are skipped.
 */
export function blend(
  rig: ViewerRig,
  beta: ArrayLike<number>,
  out?: Float32Array
): Float32Array {
  if (beta.length !== rig.names.length) {
    throw new RigFormatError(
      `${beta.length} blend weights for ${rig.names.length} expressions`
    );
  }
  const res = out !== undefined && out.length === rig.neutral.length
    ? out
    : new Float32Array(rig.neutral.length);
  res.set(rig.neutral);
  for (let i = 0; i < beta.length; i++) {
    const b = beta[i];
    if (b === 0) continue;
    const d = rig.deltas[i];
    for (let j = 0; j < res.length; j++) res[j] += b * d[j];
  }
  return res;
}

export interface ChecksumReport {
  name: string;
  expected: string;
  actual: string;
  ok: boolean;
}

/** Re-blend every single-expression pose and compare against the shipped
 * checksums; entry 0 covers the neutral itself. */
export function verifyChecksums(rig: ViewerRig): ChecksumReport[] {
  const reports: ChecksumReport[] = [
    {
      name: "(neutral)",
      expected: rig.neutralChecksum,
      actual: checksumHex(rig.neutral),
      ok: true,
    },
  ];
  reports[0].ok = reports[0].actual === reports[0].expected;
  const beta = new Float64Array(rig.names.length);
  const buf = new Float32Array(rig.neutral.length);
  for (let i = 0; i < rig.names.length; i++) {
    beta.fill(0);
    beta[i] = 1;
    const actual = checksumHex(blend(rig, beta, buf));
    reports.push({
      name: rig.names[i],
      expected: rig.checksums[i],
      actual,
      ok: actual === rig.checksums[i],
    });
  }
  return reports;
}

/** Group expression indices by the leading lowercase run of their name
 * ("browDownLeft" -> "brow"), preserving first-appearance order. */
export function groupByPrefix(names: string[]): { group: string; indices: number[] }[] {
  const order: string[] = [];
  const byGroup = new Map<string, number[]>();
  names.forEach((name, i) => {
    const m = /^[a-z]+/.exec(name);
    const group = m ? m[0] : name;
    if (!byGroup.has(group)) {
      byGroup.set(group, []);
      order.push(group);
    }
    byGroup.get(group)!.push(i);
  });
  return order.map((group) => ({ group, indices: byGroup.get(group)! }));
}

/** Parse a blend-weight sequence: one frame per line, m floats each;
 * '#' comments and blank lines are skipped. */
export function parseBetaSequence(text: string, expressionCount: number): Float64Array[] {
  const frames: Float64Array[] = [];
  const lines = text.split(/\r?\n/);
  for (let ln = 0; ln < lines.length; ln++) {
    const body = lines[ln].split("#", 1)[0].trim();
    if (!body) continue;
    const parts = body.split(/\s+/);
    if (parts.length !== expressionCount) {
      throw new RigFormatError(
        `line ${ln + 1}: frame has ${parts.length} weights, rig has ${expressionCount}`
      );
    }
    const frame = new Float64Array(expressionCount);
    for (let i = 0; i < parts.length; i++) {
      const v = Number(parts[i]);
      if (!Number.isFinite(v)) {
        throw new RigFormatError(`line ${ln + 1}: bad number ${JSON.stringify(parts[i])}`);
      }
      frame[i] = v;
    }
    frames.push(frame);
  }
  return frames;
}
