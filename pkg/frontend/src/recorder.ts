import { TARGET_RATE, encodeWavPcm16, resampleLinear } from './wav'

/**
 * Microphone capture via the Web Audio graph: raw float frames are collected,
 * resampled to 16 kHz, and encoded as PCM16 WAV locally, so the service
 * always receives one canonical format.
 */
export class MicRecorder {
  private ctx?: AudioContext
  private stream?: MediaStream
  private source?: MediaStreamAudioSourceNode
  private node?: ScriptProcessorNode
  private buffers: Float32Array[] = []

  async start(): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({ audio: true })
    this.ctx = new AudioContext()
    this.source = this.ctx.createMediaStreamSource(this.stream)
    this.node = this.ctx.createScriptProcessor(4096, 1, 1)
    this.buffers = []
    this.node.onaudioprocess = (e) => {
      this.buffers.push(new Float32Array(e.inputBuffer.getChannelData(0)))
    }
    this.source.connect(this.node)
    this.node.connect(this.ctx.destination)
  }

  async stop(): Promise<ArrayBuffer> {
    const rate = this.ctx?.sampleRate ?? TARGET_RATE
    this.node?.disconnect()
    this.source?.disconnect()
    this.stream?.getTracks().forEach((t) => t.stop())
    await this.ctx?.close()
    let total = 0
    for (const b of this.buffers) total += b.length
    const joined = new Float32Array(total)
    let offset = 0
    for (const b of this.buffers) {
      joined.set(b, offset)
      offset += b.length
    }
    return encodeWavPcm16(resampleLinear(joined, rate, TARGET_RATE), TARGET_RATE)
  }
}

/** Record for roughly `seconds` (default ~1.5 s) and return WAV bytes. */
export async function recordClip(seconds = 1.5): Promise<ArrayBuffer> {
  const recorder = new MicRecorder()
  await recorder.start()
  await new Promise((resolve) => setTimeout(resolve, seconds * 1000))
  return recorder.stop()
}
