#!/usr/bin/env node
/** lata-extract --job job.json|job.yaml [--image-root DIR] [--out DIR] */
import { extract, jobFromFileOrThrow } from './extract.js'

function parseArgs(argv: string[]): Record<string, string> {
  const out: Record<string, string> = {}
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i]
    if (!flag.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got ${argv.join(' ')}`)
    }
    out[flag.slice(2)] = argv[i + 1]
  }
  return out
}

async function main(): Promise<number> {
  try {
    const args = parseArgs(process.argv.slice(2))
    if (!args.job) {
      console.error(JSON.stringify({ error: 'UsageError', message: '--job is required' }))
      return 2
    }
    const job = jobFromFileOrThrow(args.job)
    if (args['image-root']) job.imageRoot = args['image-root']
    if (args.out) job.outputDir = args.out
    const summary = await extract(job)
    console.log(JSON.stringify(summary, null, 2))
    return 0
  } catch (e) {
    console.error(JSON.stringify({ error: 'ExtractError', message: String(e) }))
    return 1
  }
}

main().then((code) => process.exit(code))
