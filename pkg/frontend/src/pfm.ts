/** Grayscale PFM codec (little-endian float32, bottom-up row order). */

import { ArrayView, makeView } from './arrays.js'

export function encodePfm(view: ArrayView): Buffer {
  if (view.shape.length !== 2) {
    throw new Error(`PFM writer expects an HxW array, got shape [${view.shape}]`)
  }
  const [h, w] = view.shape
  const header = Buffer.from(`Pf\n${w} ${h}\n-1.0\n`, 'ascii')
  const body = Buffer.alloc(4 * w * h)
  // rows are stored bottom-up
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      body.writeFloatLE(view.data[y * w + x], 4 * ((h - 1 - y) * w + x))
    }
  }
  return Buffer.concat([header, body])
}

export function decodePfm(buf: Buffer): ArrayView {
  // header: type line, dimensions line, scale line, each '\n'-terminated
  let offset = 0
  const readLine = (): string => {
    const end = buf.indexOf(0x0a, offset)
    if (end < 0) throw new Error('PFM header truncated')
    const line = buf.toString('ascii', offset, end)
    offset = end + 1
    return line
  }
  const kind = readLine().trim()
  if (kind !== 'Pf') throw new Error(`unsupported PFM type ${JSON.stringify(kind)}`)
  const dims = readLine().trim().split(/\s+/).map(Number)
  if (dims.length !== 2 || dims.some((v) => !Number.isInteger(v) || v < 1)) {
    throw new Error('bad PFM dimensions line')
  }
  const [w, h] = dims
  const scale = Number(readLine().trim())
  if (!(scale < 0)) throw new Error('only little-endian PFM is supported')
  if (buf.length - offset !== 4 * w * h) throw new Error('PFM payload size mismatch')
  const out = new Float32Array(w * h)
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      out[y * w + x] = buf.readFloatLE(offset + 4 * ((h - 1 - y) * w + x))
    }
  }
  return makeView(out, [h, w])
}
