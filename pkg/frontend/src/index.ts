/** Array-in / array-out entry points over the dofgeo CLI.
 *
 * The bindings add no arithmetic of their own: each call serializes its
 * inputs to the tool's file formats, invokes the CLI, and parses the result
 * back. Numeric defaults therefore always match the tool's shipped config.
 */

import { writeFileSync, readFileSync } from 'node:fs'
import { join } from 'node:path'

import { ArrayView, assertDepthShape, assertImageShape, makeView } from './arrays.js'
import { runCli, withScratchDir } from './cli.js'
import { decodePfm, encodePfm } from './pfm.js'
import { decodePng, encodePng } from './png.js'

export { ArrayView, makeView } from './arrays.js'
export { decodePfm, encodePfm } from './pfm.js'
export { decodePng, encodePng } from './png.js'

export type LensParams = {
  focalLength?: number
  fNumber?: number
  sensorWidth?: number
}

export type Camera = {
  viewId: number
  K: number[] // 9 entries, row-major
  R: number[] // 9 entries, row-major
  t: number[] // 3 entries
  width: number
  height: number
}

export type Match = {
  viewI: number
  viewJ: number
  xI: number
  yI: number
  xJ: number
  yJ: number
  conf: number
}

export type ScaleShift = { s: number; b: number }

function writeConfig(dir: string, entries: Record<string, unknown>): string {
  const path = join(dir, 'config.json')
  writeFileSync(path, JSON.stringify(entries))
  return path
}

function writeCameras(dir: string, cameras: Camera[]): string {
  const path = join(dir, 'cameras.json')
  const payload = cameras.map((c) => ({
    view_id: c.viewId,
    K: c.K,
    R: c.R,
    t: c.t,
    width: c.width,
    height: c.height,
  }))
  writeFileSync(path, JSON.stringify(payload))
  return path
}

function writeMatches(dir: string, matches: Match[]): string {
  const path = join(dir, 'matches.csv')
  const lines = ['view_i,view_j,x_i,y_i,x_j,y_j,conf']
  for (const m of matches) {
    lines.push([m.viewI, m.viewJ, m.xI, m.yI, m.xJ, m.yJ, m.conf].join(','))
  }
  writeFileSync(path, lines.join('\n') + '\n')
  return path
}

/** Version of the underlying tool. */
export function version(): string {
  const out = runCli(['--version']).trim()
  const m = out.match(/version\s+(\S+)/)
  return m ? m[1] : out
}

/** Synthesize a defocused image; mirrors the `defocus` command. */
export function bindDefocus(
  image: ArrayView,
  depth: ArrayView,
  focusDistance: number,
  kernelFamily: 'gaussian' | 'smoothstep' | 'polygonal' = 'gaussian',
  lens: LensParams = {},
): ArrayView {
  const [ih, iw] = assertImageShape(image)
  const [dh, dw] = assertDepthShape(depth)
  if (ih !== dh || iw !== dw) {
    throw new Error(`image ${ih}x${iw} and depth ${dh}x${dw} dimensions differ`)
  }
  return withScratchDir((dir) => {
    const imagePath = join(dir, 'image.png')
    const depthPath = join(dir, 'depth.pfm')
    writeFileSync(imagePath, encodePng(image))
    writeFileSync(depthPath, encodePfm(depth))
    const config = writeConfig(dir, {
      kernel_family: kernelFamily,
      focus_distance: focusDistance,
      ...(lens.focalLength !== undefined && { focal_length: lens.focalLength }),
      ...(lens.fNumber !== undefined && { f_number: lens.fNumber }),
      ...(lens.sensorWidth !== undefined && { sensor_width: lens.sensorWidth }),
    })
    runCli([
      '--config', config, '--out-dir', dir,
      'defocus', '--image', imagePath, '--depth', depthPath,
    ])
    return decodePng(readFileSync(join(dir, 'defocus.png')))
  })
}

/** Evaluate the supervision losses; mirrors the `losses` command's JSON. */
export function bindLosses(
  rend: ArrayView,
  gt: ArrayView,
  alignedDepth?: ArrayView,
  focusDistance?: number,
): Record<string, number | boolean | null> {
  assertImageShape(rend)
  assertImageShape(gt)
  return withScratchDir((dir) => {
    const rendPath = join(dir, 'rend.png')
    const gtPath = join(dir, 'gt.png')
    writeFileSync(rendPath, encodePng(rend))
    writeFileSync(gtPath, encodePng(gt))
    const args = ['--out-dir', dir]
    if (focusDistance !== undefined) {
      args.unshift('--config', writeConfig(dir, { focus_distance: focusDistance }))
    }
    args.push('losses', '--rend', rendPath, '--gt', gtPath)
    if (alignedDepth) {
      const depthPath = join(dir, 'aligned.pfm')
      writeFileSync(depthPath, encodePfm(alignedDepth))
      args.push('--aligned-depth', depthPath)
    }
    runCli(args)
    return JSON.parse(readFileSync(join(dir, 'losses.json'), 'utf8'))
  })
}

/** Recover per-view (s, b); mirrors the `align-global` command. */
export function bindAlignGlobal(
  depths: ArrayView[],
  cameras: Camera[],
  matches: Match[],
): ScaleShift[] {
  if (depths.length !== cameras.length) {
    throw new Error('need one depth map per camera')
  }
  if (cameras.length < 2) {
    throw new Error('insufficient views: need at least 2')
  }
  for (const d of depths) assertDepthShape(d)
  return withScratchDir((dir) => {
    const args = [
      '--out-dir', dir, 'align-global',
      '--cameras', writeCameras(dir, cameras),
    ]
    depths.forEach((d, i) => {
      const p = join(dir, `mono_${i}.pfm`)
      writeFileSync(p, encodePfm(d))
      args.push('--depth', p)
    })
    args.push('--matches', writeMatches(dir, matches))
    runCli(args)
    const params = JSON.parse(
      readFileSync(join(dir, 'scale_params.json'), 'utf8'),
    ) as { view_id: number; s: number; b: number }[]
    return params.map((p) => ({ s: p.s, b: p.b }))
  })
}
