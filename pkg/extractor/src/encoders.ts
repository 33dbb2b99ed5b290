/**
 * Encoder registry. Two id schemes:
 *
 *   builtin:patch-projection-<dim>  deterministic seeded projection encoder,
 *                                   always available, no downloads
 *   tfjs-graph:<url>                TensorFlow.js GraphModel by URL; needs the
 *                                   optional @tensorflow/tfjs peer and network
 *                                   access to fetch weights
 *
 * Builtin encoders exist so pipelines run in offline environments; they are
 * deterministic functions of the pixels, not pretrained models.
 */
import { DecodedImage, resize } from './images.js'

export interface Encoder {
  readonly id: string
  readonly dim: number
  encode(batch: DecodedImage[]): Promise<Float32Array[]>
}

export class ModelUnavailable extends Error {}

/** fnv1a, for deriving stable seeds from encoder ids. */
function hashId(text: string): number {
  let h = 0x811c9dc5
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i)
    h = Math.imul(h, 0x01000193)
  }
  return h >>> 0
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

const PATCH_INPUT = 32

class PatchProjectionEncoder implements Encoder {
  readonly id: string
  readonly dim: number
  private readonly projection: Float32Array

  constructor(id: string, dim: number) {
    this.id = id
    this.dim = dim
    const rand = mulberry32(hashId(id))
    const inputDim = PATCH_INPUT * PATCH_INPUT * 3
    this.projection = new Float32Array(inputDim * dim)
    const scale = 1 / Math.sqrt(inputDim)
    for (let i = 0; i < this.projection.length; i++) {
      // Box-Muller drives a Gaussian projection; scale keeps outputs O(1)
      const u = Math.max(rand(), 1e-12)
      const v = rand()
      this.projection[i] = scale * Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v)
    }
  }

  async encode(batch: DecodedImage[]): Promise<Float32Array[]> {
    return batch.map((image) => {
      const pixels = resize(image, PATCH_INPUT)
      const out = new Float32Array(this.dim)
      for (let j = 0; j < this.dim; j++) {
        let acc = 0
        for (let i = 0; i < pixels.length; i++) {
          acc += (pixels[i] - 0.5) * this.projection[i * this.dim + j]
        }
        out[j] = Math.tanh(acc)
      }
      return out
    })
  }
}

/* eslint-disable @typescript-eslint/no-explicit-any */
async function loadTfjs(): Promise<any> {
  const moduleName = '@tensorflow/tfjs' // optional peer; resolved at runtime only
  try {
    return await import(moduleName)
  } catch {
    throw new ModelUnavailable(
      `@tensorflow/tfjs is not installed; add the optional peer to run hub encoders`
    )
  }
}

class TfjsGraphEncoder implements Encoder {
  readonly id: string
  readonly dim: number
  private readonly url: string
  private model: any = null

  constructor(id: string, url: string) {
    this.id = id
    this.url = url
    this.dim = 0 // discovered from the model output
  }

  private async load(): Promise<any> {
    if (this.model) return this.model
    const tf = await loadTfjs()
    try {
      this.model = await tf.loadGraphModel(this.url)
    } catch (e) {
      throw new ModelUnavailable(`${this.id}: could not fetch model from ${this.url} (${e})`)
    }
    return this.model
  }

  async encode(batch: DecodedImage[]): Promise<Float32Array[]> {
    const model = await this.load()
    const tf = await loadTfjs()
    const out: Float32Array[] = []
    for (const image of batch) {
      const pixels = resize(image, 224)
      const input = tf.tensor4d(Array.from(pixels), [1, 224, 224, 3])
      const output = model.predict(input)
      out.push(new Float32Array(await output.data()))
      input.dispose()
      output.dispose()
    }
    return out
  }
}

export function makeEncoder(id: string): Encoder {
  const builtin = /^builtin:patch-projection-(\d+)$/.exec(id)
  if (builtin) {
    const dim = parseInt(builtin[1], 10)
    if (dim < 2) throw new Error(`${id}: projection dimension must be at least 2`)
    return new PatchProjectionEncoder(id, dim)
  }
  const graph = /^tfjs-graph:(.+)$/.exec(id)
  if (graph) {
    return new TfjsGraphEncoder(id, graph[1])
  }
  throw new ModelUnavailable(`unknown encoder id ${id}`)
}
