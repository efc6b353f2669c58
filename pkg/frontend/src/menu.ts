import type { RecordingRow, WordEntry } from './types'

/** Pure view models, kept DOM-free so they can be tested headlessly. */

export interface WordRow {
  id: number
  prompt: string
  gloss: string
  collected: number
  done: number
}

export function wordMenuModel(words: WordEntry[],
                              doneCounts: Record<string, number>): WordRow[] {
  return [...words]
    .sort((a, b) => a.id - b.id)
    .map((w) => ({
      id: w.id,
      prompt: w.kinyarwanda,
      gloss: w.english,
      collected: w.collected_count,
      done: doneCounts[String(w.id)] ?? 0,
    }))
}

export function renderWordMenuHtml(rows: WordRow[]): string {
  return rows
    .map((r) =>
      `<button class="word" data-word-id="${r.id}">` +
      `<span class="kin">${r.prompt}</span>` +
      `<span class="eng">${r.gloss}</span>` +
      `<span class="count">${r.collected}${r.done ? ` (+${r.done} yours)` : ''}</span>` +
      `</button>`)
    .join('\n')
}

export function qcBadgesHtml(flags: string[]): string {
  return flags.map((f) => `<span class="badge">${f}</span>`).join(' ')
}

export function renderPendingRowHtml(row: RecordingRow): string {
  return (
    `<li class="pending" data-id="${row.id}">` +
    `<span class="label">${row.label}</span>` +
    `<span class="speaker">${row.speaker}</span>` +
    `<span class="flags">${qcBadgesHtml(row.qc_flags)}</span>` +
    `<audio controls preload="none" src=""></audio>` +
    `<button class="approve">Approve</button>` +
    `<button class="reject" data-reason="wrong_word">Wrong word</button>` +
    `<button class="reject" data-reason="incomplete_word">Incomplete</button>` +
    `<button class="reject" data-reason="other">Other</button>` +
    `</li>`
  )
}
