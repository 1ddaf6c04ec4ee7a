/** Process boundary to the `dofgeo` command-line tool. */

import { spawnSync } from 'node:child_process'
import { mkdtempSync, rmSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'

export const DOFGEO_BIN = process.env.DOFGEO_BIN ?? 'dofgeo'

export function runCli(args: string[]): string {
  const res = spawnSync(DOFGEO_BIN, args, { encoding: 'utf8' })
  if (res.error) {
    throw new Error(`failed to launch ${DOFGEO_BIN}: ${res.error.message}`)
  }
  if (res.status !== 0) {
    const detail = (res.stderr || res.stdout || '').trim()
    throw new Error(`dofgeo ${args[args.length - 1]} failed: ${detail}`)
  }
  return res.stdout
}

/** Run `fn` with a private scratch directory, removed afterwards. */
export function withScratchDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), 'dofgeo-'))
  try {
    return fn(dir)
  } finally {
    rmSync(dir, { recursive: true, force: true })
  }
}
