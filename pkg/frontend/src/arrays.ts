/** Row-major float array with an explicit shape. */
export type ArrayView = {
  data: Float32Array
  shape: number[]
}

export function makeView(data: Float32Array, shape: number[]): ArrayView {
  const count = shape.reduce((a, b) => a * b, 1)
  if (data.length !== count) {
    throw new Error(`buffer length ${data.length} does not match shape [${shape}]`)
  }
  return { data, shape }
}

export function assertImageShape(view: ArrayView): [number, number] {
  if (view.shape.length !== 3 || view.shape[2] !== 3) {
    throw new Error(`expected an HxWx3 image, got shape [${view.shape}]`)
  }
  return [view.shape[0], view.shape[1]]
}

export function assertDepthShape(view: ArrayView): [number, number] {
  if (view.shape.length !== 2) {
    throw new Error(`expected an HxW depth map, got shape [${view.shape}]`)
  }
  return [view.shape[0], view.shape[1]]
}
