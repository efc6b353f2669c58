export interface WordEntry {
  id: number
  english: string
  kinyarwanda: string
  label: string
  collected_count: number
}

export interface UploadResult {
  ok: boolean
  duplicate: boolean
  id?: string
  qcFlags: string[]
  error?: string
  status: number
}

export interface RecordingRow {
  id: string
  label: string
  speaker: string
  duration_ms: number
  qc_flags: string[]
  status: string
}

export interface Stats {
  per_word_counts: Record<string, number>
  total_speakers: number
  total_bytes: number
  pending_review: number
}

export type Verdict = 'approved' | 'rejected'
export type RejectReason = 'wrong_word' | 'incomplete_word' | 'other'
