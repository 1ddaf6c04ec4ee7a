/** 8-bit RGB PNG <-> float image views in [0, 1]. */

import { PNG } from 'pngjs'

import { ArrayView, assertImageShape, makeView } from './arrays.js'

export function encodePng(view: ArrayView): Buffer {
  const [h, w] = assertImageShape(view)
  const png = new PNG({ width: w, height: h })
  for (let i = 0; i < h * w; i++) {
    for (let c = 0; c < 3; c++) {
      // round-half-away quantization, matching the primary's PNG writer
      const v = Math.round(view.data[3 * i + c] * 255)
      png.data[4 * i + c] = Math.min(255, Math.max(0, v))
    }
    png.data[4 * i + 3] = 255
  }
  return PNG.sync.write(png, { colorType: 2 })
}

export function decodePng(buf: Buffer): ArrayView {
  const png = PNG.sync.read(buf)
  const out = new Float32Array(png.height * png.width * 3)
  for (let i = 0; i < png.height * png.width; i++) {
    for (let c = 0; c < 3; c++) {
      out[3 * i + c] = png.data[4 * i + c] / 255
    }
  }
  return makeView(out, [png.height, png.width, 3])
}
