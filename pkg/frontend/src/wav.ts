/**
 * Client-side WAV handling: the app always uploads 16 kHz mono 16-bit PCM so
 * the server never has to guess formats.
 */

export const TARGET_RATE = 16000

/** Linear-interpolation resample; adequate for speech command clips. */
export function resampleLinear(samples: Float32Array, from: number, to: number): Float32Array {
  if (from === to) return samples
  const outLen = Math.floor((samples.length * to) / from)
  const out = new Float32Array(outLen)
  const step = from / to
  for (let i = 0; i < outLen; i++) {
    const pos = i * step
    const lo = Math.floor(pos)
    const hi = Math.min(lo + 1, samples.length - 1)
    const frac = pos - lo
    out[i] = samples[lo] * (1 - frac) + samples[hi] * frac
  }
  return out
}

/** Encode mono float samples in [-1, 1] as a canonical 44-byte-header WAV. */
export function encodeWavPcm16(samples: Float32Array, sampleRate: number): ArrayBuffer {
  const buf = new ArrayBuffer(44 + samples.length * 2)
  const view = new DataView(buf)
  const writeTag = (offset: number, tag: string) => {
    for (let i = 0; i < tag.length; i++) view.setUint8(offset + i, tag.charCodeAt(i))
  }
  writeTag(0, 'RIFF')
  view.setUint32(4, 36 + samples.length * 2, true)
  writeTag(8, 'WAVE')
  writeTag(12, 'fmt ')
  view.setUint32(16, 16, true)
  view.setUint16(20, 1, true) // PCM
  view.setUint16(22, 1, true) // mono
  view.setUint32(24, sampleRate, true)
  view.setUint32(28, sampleRate * 2, true)
  view.setUint16(32, 2, true)
  view.setUint16(34, 16, true)
  writeTag(36, 'data')
  view.setUint32(40, samples.length * 2, true)
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]))
    const q = Math.max(-32768, Math.min(32767, Math.round(clamped * 32768)))
    view.setInt16(44 + i * 2, q, true)
  }
  return buf
}

export interface WavHeader {
  sampleRate: number
  channels: number
  bitsPerSample: number
  dataLength: number
}

/** Minimal header parse, used for playback sanity and tests. */
export function parseWavHeader(buf: ArrayBuffer): WavHeader {
  const view = new DataView(buf)
  const tag = (offset: number) =>
    String.fromCharCode(view.getUint8(offset), view.getUint8(offset + 1),
      view.getUint8(offset + 2), view.getUint8(offset + 3))
  if (tag(0) !== 'RIFF' || tag(8) !== 'WAVE') throw new Error('not a WAV file')
  let pos = 12
  let header: Partial<WavHeader> = {}
  while (pos + 8 <= buf.byteLength) {
    const id = tag(pos)
    const size = view.getUint32(pos + 4, true)
    if (id === 'fmt ') {
      header.channels = view.getUint16(pos + 10, true)
      header.sampleRate = view.getUint32(pos + 12, true)
      header.bitsPerSample = view.getUint16(pos + 22, true)
    } else if (id === 'data') {
      header.dataLength = Math.min(size, buf.byteLength - pos - 8)
    }
    pos += 8 + size + (size % 2)
  }
  if (header.sampleRate === undefined || header.dataLength === undefined) {
    throw new Error('missing fmt or data chunk')
  }
  return header as WavHeader
}

/** Decode the PCM payload of a mono 16-bit WAV back to floats (tests, playback). */
export function decodeWavPcm16(buf: ArrayBuffer): { samples: Float32Array; sampleRate: number } {
  const header = parseWavHeader(buf)
  if (header.channels !== 1 || header.bitsPerSample !== 16) {
    throw new Error('expected mono 16-bit PCM')
  }
  const view = new DataView(buf)
  let dataPos = 12
  while (dataPos + 8 <= buf.byteLength) {
    const id = String.fromCharCode(view.getUint8(dataPos), view.getUint8(dataPos + 1),
      view.getUint8(dataPos + 2), view.getUint8(dataPos + 3))
    const size = view.getUint32(dataPos + 4, true)
    if (id === 'data') {
      const n = Math.floor(Math.min(size, buf.byteLength - dataPos - 8) / 2)
      const samples = new Float32Array(n)
      for (let i = 0; i < n; i++) {
        samples[i] = view.getInt16(dataPos + 8 + i * 2, true) / 32768
      }
      return { samples, sampleRate: header.sampleRate }
    }
    dataPos += 8 + size + (size % 2)
  }
  throw new Error('no data chunk')
}
