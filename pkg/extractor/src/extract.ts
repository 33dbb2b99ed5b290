/**
 * Extraction job: run encoders over a labeled image folder and write an LATC
 * bundle (classifier features, per-encoder foundation features, logits,
 * labels, manifest.json) that the lata toolkit loads directly.
 *
 * Labels come from the class subdirectories of imageRoot. Logits come from an
 * optional linear head applied to the classifier features; without a head a
 * zero logits matrix is written so the bundle stays schema-complete, and the
 * summary says so.
 */
import { mkdirSync, readFileSync, writeFileSync, existsSync } from 'node:fs'
import { join } from 'node:path'
import yaml from 'js-yaml'

import { Encoder, makeEncoder } from './encoders.js'
import { decodeImage, DecodedImage, listLabeledImages } from './images.js'
import { Matrix, writeContainer } from './latc.js'

export interface LinearHead {
  /** dim x numClasses, row-major. */
  weights: number[][]
  bias: number[]
}

export interface ExtractJob {
  imageRoot: string
  outputDir: string
  classifierEncoder: string
  foundationEncoders: string[]
  batchSize?: number
  device?: string
  split?: 'pool' | 'validation' | 'test'
  seed?: number
  headPath?: string
}

export interface ExtractSummary {
  manifestPath: string
  images: number
  skipped: number
  numClasses: number
  encoderDims: Record<string, number>
  headApplied: boolean
}

export function loadJob(path: string): ExtractJob {
  const raw = readFileSync(path, 'utf-8')
  const doc = (path.endsWith('.yaml') || path.endsWith('.yml')
    ? yaml.load(raw)
    : JSON.parse(raw)) as Record<string, unknown>
  const job = doc as unknown as ExtractJob
  if (!job.imageRoot || !job.outputDir || !job.classifierEncoder) {
    throw new Error(`${path}: job needs imageRoot, outputDir and classifierEncoder`)
  }
  if (!Array.isArray(job.foundationEncoders) || job.foundationEncoders.length === 0) {
    throw new Error(`${path}: job needs a non-empty foundationEncoders list`)
  }
  return job
}

async function encodeAll(encoder: Encoder, images: DecodedImage[],
                         batchSize: number): Promise<Float32Array[]> {
  const features: Float32Array[] = []
  for (let start = 0; start < images.length; start += batchSize) {
    const batch = images.slice(start, start + batchSize)
    const encoded = await encoder.encode(batch)
    for (let i = 0; i < encoded.length; i++) {
      const vec = encoded[i]
      for (let j = 0; j < vec.length; j++) {
        if (!Number.isFinite(vec[j])) {
          throw new Error(`${encoder.id}: non-finite activation for ${batch[i].path}`)
        }
      }
      features.push(vec)
    }
  }
  return features
}

function toMatrix(features: Float32Array[]): Matrix {
  const rows = features.length
  const cols = features[0].length
  const data = new Float32Array(rows * cols)
  features.forEach((vec, r) => {
    if (vec.length !== cols) {
      throw new Error(`inconsistent feature widths: ${vec.length} vs ${cols}`)
    }
    data.set(vec, r * cols)
  })
  return { rows, cols, dtype: 'f32', data }
}

function applyHead(features: Matrix, head: LinearHead): Matrix {
  const numClasses = head.bias.length
  if (head.weights.length !== features.cols) {
    throw new Error(`head expects ${head.weights.length} feature dims, encoder gives ${features.cols}`)
  }
  const data = new Float32Array(features.rows * numClasses)
  for (let r = 0; r < features.rows; r++) {
    for (let c = 0; c < numClasses; c++) {
      let acc = head.bias[c]
      for (let j = 0; j < features.cols; j++) {
        acc += features.data[r * features.cols + j] * head.weights[j][c]
      }
      data[r * numClasses + c] = acc
    }
  }
  return { rows: features.rows, cols: numClasses, dtype: 'f32', data }
}

export async function extract(job: ExtractJob): Promise<ExtractSummary> {
  const entries = listLabeledImages(job.imageRoot)
  if (entries.length === 0) {
    throw new Error(`${job.imageRoot}: no decodable images found, nothing written`)
  }
  const images: DecodedImage[] = []
  const labels: number[] = []
  let skipped = 0
  for (const entry of entries) {
    try {
      images.push(decodeImage(entry.path))
      labels.push(entry.label)
    } catch (e) {
      skipped += 1
      console.error(`skipping ${entry.path}: ${e}`)
    }
  }
  if (images.length === 0) {
    throw new Error(`${job.imageRoot}: every image failed to decode, nothing written`)
  }

  const batchSize = job.batchSize ?? 16
  const classifierEncoder = makeEncoder(job.classifierEncoder)
  const classifier = toMatrix(await encodeAll(classifierEncoder, images, batchSize))

  const numClasses = Math.max(2, Math.max(...labels) + 1)
  let head: LinearHead | null = null
  if (job.headPath) {
    head = JSON.parse(readFileSync(job.headPath, 'utf-8')) as LinearHead
  }
  const logits: Matrix = head
    ? applyHead(classifier, head)
    : { rows: classifier.rows, cols: numClasses, dtype: 'f32',
        data: new Float32Array(classifier.rows * numClasses) }

  mkdirSync(job.outputDir, { recursive: true })
  writeContainer(classifier, join(job.outputDir, 'classifier.latc'))
  const encoderDims: Record<string, number> = { [job.classifierEncoder]: classifier.cols }
  const foundationEntries: { model_id: string; path: string }[] = []
  for (const id of job.foundationEncoders) {
    const encoder = makeEncoder(id)
    const matrix = toMatrix(await encodeAll(encoder, images, batchSize))
    const fileName = `foundation_${foundationEntries.length}.latc`
    writeContainer(matrix, join(job.outputDir, fileName))
    foundationEntries.push({ model_id: id, path: fileName })
    encoderDims[id] = matrix.cols
  }
  writeContainer(logits, join(job.outputDir, 'logits.latc'))
  writeContainer(
    { rows: labels.length, cols: 1, dtype: 'i32', data: Int32Array.from(labels) },
    join(job.outputDir, 'labels.latc')
  )

  const manifest = {
    classifier_features: 'classifier.latc',
    foundation_features: foundationEntries,
    logits: 'logits.latc',
    labels: 'labels.latc',
    split: job.split ?? 'pool',
    seed: job.seed ?? 0,
    notes: {
      image_root: job.imageRoot,
      classifier_encoder: job.classifierEncoder,
      preprocessing: 'bilinear resize, RGB in [0,1]',
      skipped_images: skipped,
    },
  }
  const manifestPath = join(job.outputDir, 'manifest.json')
  writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n')
  return {
    manifestPath,
    images: images.length,
    skipped,
    numClasses,
    encoderDims,
    headApplied: head !== null,
  }
}

export function jobFromFileOrThrow(path: string): ExtractJob {
  if (!existsSync(path)) throw new Error(`job file ${path} does not exist`)
  return loadJob(path)
}
