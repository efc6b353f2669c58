import type { RecordingRow, RejectReason, Stats, UploadResult, Verdict, WordEntry } from './types'

/** Typed client for the collection service; the app's only network surface. */
export class ApiClient {
  constructor(private baseUrl: string = '', private reviewToken: string = '') {}

  private url(path: string): string {
    return this.baseUrl + path
  }

  async words(): Promise<WordEntry[]> {
    const res = await fetch(this.url('/api/words'))
    if (!res.ok) throw new Error(`words failed: ${res.status}`)
    return res.json()
  }

  async upload(wordId: number, speakerCode: string, wav: ArrayBuffer,
               deviceHint?: string): Promise<UploadResult> {
    const form = new FormData()
    form.append('audio', new Blob([wav], { type: 'audio/wav' }), 'take.wav')
    form.append('word_id', String(wordId))
    form.append('speaker_code', speakerCode)
    form.append('consent', 'true')
    if (deviceHint) form.append('device_hint', deviceHint)
    const res = await fetch(this.url('/api/recordings'), { method: 'POST', body: form })
    const body = await res.json().catch(() => ({}))
    return {
      ok: res.status === 201,
      duplicate: res.status === 409,
      id: body.id,
      qcFlags: body.qc_flags ?? [],
      error: body.error,
      status: res.status,
    }
  }

  async review(id: string, verdict: Verdict, reason?: RejectReason): Promise<void> {
    const headers: Record<string, string> = { 'content-type': 'application/json' }
    if (this.reviewToken) headers['x-review-token'] = this.reviewToken
    const res = await fetch(this.url(`/api/recordings/${id}/review`), {
      method: 'POST',
      headers,
      body: JSON.stringify(reason ? { verdict, reason } : { verdict }),
    })
    if (res.status === 404) throw new Error('stale recording: refresh the list')
    if (!res.ok) throw new Error(`review failed: ${res.status}`)
  }

  async recordings(status: string = 'pending'): Promise<RecordingRow[]> {
    const res = await fetch(this.url(`/api/recordings?status=${status}`))
    if (!res.ok) throw new Error(`listing failed: ${res.status}`)
    return res.json()
  }

  async stats(): Promise<Stats> {
    const res = await fetch(this.url('/api/stats'))
    if (!res.ok) throw new Error(`stats failed: ${res.status}`)
    return res.json()
  }

  audioUrl(id: string): string {
    return this.url(`/api/recordings/${id}/audio`)
  }
}
