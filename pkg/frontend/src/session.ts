import type { ApiClient } from './api'

/**
 * Contributor session state: a stable pseudonymous speaker code, per-word
 * done counts, and a FIFO upload queue that survives page reloads (queued
 * audio is kept base64-encoded in storage).
 */

export interface StorageLike {
  getItem(key: string): string | null
  setItem(key: string, value: string): void
  removeItem(key: string): void
}

export interface QueuedUpload {
  wordId: number
  wavBase64: string
  queuedAt: number
}

export interface DrainReport {
  uploaded: number
  duplicates: number
  failed: number
  qcFlags: Record<string, string[]>
}

const SPEAKER_KEY = 'hakw.speaker'
const QUEUE_KEY = 'hakw.queue'
const COUNTS_KEY = 'hakw.counts'

export function bufferToBase64(buf: ArrayBuffer): string {
  const bytes = new Uint8Array(buf)
  let binary = ''
  const chunk = 0x8000
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk))
  }
  return btoa(binary)
}

export function base64ToBuffer(b64: string): ArrayBuffer {
  const binary = atob(b64)
  const bytes = new Uint8Array(binary.length)
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i)
  return bytes.buffer
}

export function generateSpeakerCode(): string {
  const alphabet = 'abcdefghjkmnpqrstuvwxyz23456789'
  let code = 'spk-'
  for (let i = 0; i < 10; i++) {
    code += alphabet[Math.floor(Math.random() * alphabet.length)]
  }
  return code
}

export class Session {
  constructor(private storage: StorageLike) {}

  get speakerCode(): string {
    let code = this.storage.getItem(SPEAKER_KEY)
    if (!code) {
      code = generateSpeakerCode()
      this.storage.setItem(SPEAKER_KEY, code)
    }
    return code
  }

  queue(): QueuedUpload[] {
    const raw = this.storage.getItem(QUEUE_KEY)
    if (!raw) return []
    try {
      return JSON.parse(raw) as QueuedUpload[]
    } catch {
      return []
    }
  }

  private saveQueue(queue: QueuedUpload[]): void {
    this.storage.setItem(QUEUE_KEY, JSON.stringify(queue))
  }

  enqueue(wordId: number, wav: ArrayBuffer): void {
    const queue = this.queue()
    queue.push({ wordId, wavBase64: bufferToBase64(wav), queuedAt: Date.now() })
    this.saveQueue(queue)
  }

  doneCounts(): Record<string, number> {
    const raw = this.storage.getItem(COUNTS_KEY)
    if (!raw) return {}
    try {
      return JSON.parse(raw) as Record<string, number>
    } catch {
      return {}
    }
  }

  private bumpCount(wordId: number): void {
    const counts = this.doneCounts()
    counts[String(wordId)] = (counts[String(wordId)] ?? 0) + 1
    this.storage.setItem(COUNTS_KEY, JSON.stringify(counts))
  }

  /**
   * Upload queued items in FIFO order. Successful and duplicate items leave
   * the queue; transport failures stop the drain and keep the remainder for
   * a retry.
   */
  async drain(api: ApiClient): Promise<DrainReport> {
    const report: DrainReport = { uploaded: 0, duplicates: 0, failed: 0, qcFlags: {} }
    let queue = this.queue()
    while (queue.length > 0) {
      const item = queue[0]
      let result
      try {
        result = await api.upload(item.wordId, this.speakerCode,
          base64ToBuffer(item.wavBase64))
      } catch {
        report.failed += 1
        break
      }
      if (result.ok) {
        report.uploaded += 1
        if (result.id) report.qcFlags[result.id] = result.qcFlags
        this.bumpCount(item.wordId)
      } else if (result.duplicate) {
        report.duplicates += 1
      } else {
        // rejected for cause (bad audio, consent...); drop it rather than loop
        report.failed += 1
      }
      queue = queue.slice(1)
      this.saveQueue(queue)
    }
    return report
  }
}
