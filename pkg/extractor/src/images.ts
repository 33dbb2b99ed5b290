/**
 * Image listing and decoding. PNG images decode through pngjs; binary PPM
 * (P6) is handled directly. Pixels come back as RGB floats in [0, 1].
 */
import { readdirSync, readFileSync, statSync } from 'node:fs'
import { join, extname } from 'node:path'
import { PNG } from 'pngjs'

export interface DecodedImage {
  path: string
  width: number
  height: number
  /** RGB interleaved, length width*height*3, values in [0, 1]. */
  pixels: Float32Array
}

const IMAGE_EXTENSIONS = new Set(['.png', '.ppm'])

export interface LabeledImagePath {
  path: string
  label: number
  className: string
}

/**
 * Images live in one subdirectory per class under the root; class ids follow
 * the sorted class names. Paths are sorted so extraction order is stable.
 */
export function listLabeledImages(root: string): LabeledImagePath[] {
  const classes = readdirSync(root)
    .filter((name) => statSync(join(root, name)).isDirectory())
    .sort()
  const out: LabeledImagePath[] = []
  classes.forEach((className, label) => {
    const files = readdirSync(join(root, className))
      .filter((f) => IMAGE_EXTENSIONS.has(extname(f).toLowerCase()))
      .sort()
    for (const file of files) {
      out.push({ path: join(root, className, file), label, className })
    }
  })
  return out
}

function decodePng(path: string, buf: Buffer): DecodedImage {
  const png = PNG.sync.read(buf)
  const pixels = new Float32Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[3 * i] = png.data[4 * i] / 255
    pixels[3 * i + 1] = png.data[4 * i + 1] / 255
    pixels[3 * i + 2] = png.data[4 * i + 2] / 255
  }
  return { path, width: png.width, height: png.height, pixels }
}

function decodePpm(path: string, buf: Buffer): DecodedImage {
  // P6 header: magic, width, height, maxval, single whitespace, raw RGB
  const header = buf.toString('ascii', 0, Math.min(buf.length, 64))
  const match = /^P6\s+(\d+)\s+(\d+)\s+(\d+)\s/.exec(header)
  if (!match) throw new Error(`${path}: not a binary PPM`)
  const [, w, h, maxval] = match
  const width = parseInt(w, 10)
  const height = parseInt(h, 10)
  const scale = parseInt(maxval, 10)
  const offset = match[0].length
  if (buf.length < offset + width * height * 3) {
    throw new Error(`${path}: truncated PPM payload`)
  }
  const pixels = new Float32Array(width * height * 3)
  for (let i = 0; i < width * height * 3; i++) {
    pixels[i] = buf[offset + i] / scale
  }
  return { path, width, height, pixels }
}

export function decodeImage(path: string): DecodedImage {
  const buf = readFileSync(path)
  const ext = extname(path).toLowerCase()
  if (ext === '.png') return decodePng(path, buf)
  if (ext === '.ppm') return decodePpm(path, buf)
  throw new Error(`${path}: unsupported image type ${ext}`)
}

/** Bilinear resize to size x size, preserving the RGB float layout. */
export function resize(image: DecodedImage, size: number): Float32Array {
  const out = new Float32Array(size * size * 3)
  const sx = image.width / size
  const sy = image.height / size
  for (let y = 0; y < size; y++) {
    const fy = Math.min((y + 0.5) * sy - 0.5, image.height - 1)
    const y0 = Math.max(0, Math.floor(fy))
    const y1 = Math.min(image.height - 1, y0 + 1)
    const wy = fy - y0
    for (let x = 0; x < size; x++) {
      const fx = Math.min((x + 0.5) * sx - 0.5, image.width - 1)
      const x0 = Math.max(0, Math.floor(fx))
      const x1 = Math.min(image.width - 1, x0 + 1)
      const wx = fx - x0
      for (let c = 0; c < 3; c++) {
        const p00 = image.pixels[3 * (y0 * image.width + x0) + c]
        const p01 = image.pixels[3 * (y0 * image.width + x1) + c]
        const p10 = image.pixels[3 * (y1 * image.width + x0) + c]
        const p11 = image.pixels[3 * (y1 * image.width + x1) + c]
        out[3 * (y * size + x) + c] =
          (1 - wy) * ((1 - wx) * p00 + wx * p01) + wy * ((1 - wx) * p10 + wx * p11)
      }
    }
  }
  return out
}
