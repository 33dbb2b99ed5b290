/**
 * LATC binary containers, bit-compatible with the lata toolkit.
 *
 * Layout: magic "LATC", version byte 1, dtype byte (1 = f32, 2 = i32),
 * two reserved zero bytes, u64-LE rows, u64-LE cols, then the row-major
 * little-endian payload. f32 payloads must be finite.
 */
import { writeFileSync, readFileSync } from 'node:fs'

export const MAGIC = 'LATC'
export const VERSION = 1
export const HEADER_BYTES = 24

export type Dtype = 'f32' | 'i32'

const DTYPE_CODE: Record<Dtype, number> = { f32: 1, i32: 2 }

export interface Matrix {
  rows: number
  cols: number
  dtype: Dtype
  data: Float32Array | Int32Array
}

export function encodeContainer(matrix: Matrix): Buffer {
  const { rows, cols, dtype, data } = matrix
  if (rows < 1 || cols < 1) {
    throw new Error(`container needs at least one row and column, got ${rows}x${cols}`)
  }
  if (data.length !== rows * cols) {
    throw new Error(`payload has ${data.length} elements, shape implies ${rows * cols}`)
  }
  if (dtype === 'f32') {
    for (let i = 0; i < data.length; i++) {
      if (!Number.isFinite(data[i])) {
        throw new Error(`non-finite element at index ${i}`)
      }
    }
  }
  const buf = Buffer.alloc(HEADER_BYTES + data.length * 4)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt8(VERSION, 4)
  buf.writeUInt8(DTYPE_CODE[dtype], 5)
  buf.writeUInt16LE(0, 6)
  buf.writeBigUInt64LE(BigInt(rows), 8)
  buf.writeBigUInt64LE(BigInt(cols), 16)
  for (let i = 0; i < data.length; i++) {
    if (dtype === 'f32') {
      buf.writeFloatLE(data[i], HEADER_BYTES + 4 * i)
    } else {
      buf.writeInt32LE(data[i], HEADER_BYTES + 4 * i)
    }
  }
  return buf
}

export function writeContainer(matrix: Matrix, path: string): void {
  writeFileSync(path, encodeContainer(matrix))
}

export function readContainer(path: string): Matrix {
  const buf = readFileSync(path)
  if (buf.length < HEADER_BYTES) throw new Error(`${path}: shorter than header`)
  if (buf.toString('ascii', 0, 4) !== MAGIC) throw new Error(`${path}: bad magic`)
  if (buf.readUInt8(4) !== VERSION) throw new Error(`${path}: unsupported version`)
  const code = buf.readUInt8(5)
  const rows = Number(buf.readBigUInt64LE(8))
  const cols = Number(buf.readBigUInt64LE(16))
  const expected = HEADER_BYTES + rows * cols * 4
  if (buf.length !== expected) {
    throw new Error(`${path}: payload is ${buf.length - HEADER_BYTES} bytes, header implies ${expected - HEADER_BYTES}`)
  }
  const n = rows * cols
  if (code === 1) {
    const data = new Float32Array(n)
    for (let i = 0; i < n; i++) data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i)
    return { rows, cols, dtype: 'f32', data }
  }
  if (code === 2) {
    const data = new Int32Array(n)
    for (let i = 0; i < n; i++) data[i] = buf.readInt32LE(HEADER_BYTES + 4 * i)
    return { rows, cols, dtype: 'i32', data }
  }
  throw new Error(`${path}: unsupported dtype code ${code}`)
}

export function floatMatrix(rows: number, cols: number, fill: (r: number, c: number) => number): Matrix {
  const data = new Float32Array(rows * cols)
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) data[r * cols + c] = fill(r, c)
  }
  return { rows, cols, dtype: 'f32', data }
}
