import { ApiClient } from './api'
import { renderPendingRowHtml, renderWordMenuHtml, wordMenuModel } from './menu'
import { recordClip } from './recorder'
import { Session } from './session'
import type { RejectReason, WordEntry } from './types'

/**
 * Single-page app with two routes: #/record (contributors) and
 * #/review?token=... (reviewers; the token is a shared secret forwarded to
 * the service, explicitly not real auth). State always reloads from the
 * server, so a refresh never loses anything; unsent takes survive in the
 * session's storage-backed queue.
 */

const session = new Session(window.localStorage)
const api = new ApiClient('', reviewToken())

function reviewToken(): string {
  const match = window.location.hash.match(/[?&]token=([^&]+)/)
  return match ? decodeURIComponent(match[1]) : ''
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) throw new Error(`missing element #${id}`)
  return node as T
}

function setStatus(message: string, isError = false): void {
  const bar = el<HTMLDivElement>('status')
  bar.textContent = message
  bar.className = isError ? 'error' : ''
}

let words: WordEntry[] = []
let lastTake: { wordId: number; wav: ArrayBuffer; url: string } | null = null

async function refreshWords(): Promise<void> {
  words = await api.words()
  el('word-menu').innerHTML = renderWordMenuHtml(
    wordMenuModel(words, session.doneCounts()))
  document.querySelectorAll<HTMLButtonElement>('#word-menu .word').forEach((btn) => {
    btn.addEventListener('click', () => startTake(Number(btn.dataset.wordId)))
  })
}

async function startTake(wordId: number): Promise<void> {
  const word = words.find((w) => w.id === wordId)
  if (!word) return
  const panel = el('take-panel')
  panel.hidden = false
  el('take-prompt').textContent = word.kinyarwanda
  el('take-gloss').textContent = `"${word.english}" — speak after the click`
  try {
    setStatus(`Recording "${word.kinyarwanda}"...`)
    const wav = await recordClip(1.5)
    if (lastTake) URL.revokeObjectURL(lastTake.url)
    lastTake = {
      wordId,
      wav,
      url: URL.createObjectURL(new Blob([wav], { type: 'audio/wav' })),
    }
    const player = el<HTMLAudioElement>('take-audio')
    player.src = lastTake.url
    player.hidden = false
    el('take-actions').hidden = false
    setStatus('Listen back, then confirm or discard.')
  } catch (err) {
    panel.hidden = true
    setStatus('Microphone unavailable: ' + String(err), true)
  }
}

async function confirmTake(): Promise<void> {
  if (!lastTake) return
  session.enqueue(lastTake.wordId, lastTake.wav)
  lastTake = null
  el('take-panel').hidden = true
  await drainQueue()
  await refreshWords()
}

async function drainQueue(): Promise<void> {
  const before = session.queue().length
  if (before === 0) return
  const report = await session.drain(api)
  if (report.duplicates) {
    setStatus(`Upload done; ${report.duplicates} duplicate take(s) were already on file.`)
  } else if (report.failed) {
    setStatus(`${session.queue().length} take(s) still queued; will retry.`, true)
  } else {
    setStatus(`Uploaded ${report.uploaded} take(s). Murakoze!`)
  }
}

async function refreshPending(): Promise<void> {
  const rows = await api.recordings('pending')
  const list = el('pending-list')
  list.innerHTML = rows.map(renderPendingRowHtml).join('\n')
  rows.forEach((row) => {
    const item = list.querySelector<HTMLLIElement>(`li[data-id="${row.id}"]`)
    if (!item) return
    item.querySelector('audio')!.src = api.audioUrl(row.id)
    item.querySelector<HTMLButtonElement>('.approve')!
      .addEventListener('click', () => decide(row.id, 'approved'))
    item.querySelectorAll<HTMLButtonElement>('.reject').forEach((btn) => {
      btn.addEventListener('click', () =>
        decide(row.id, 'rejected', btn.dataset.reason as RejectReason))
    })
  })
  el('pending-empty').hidden = rows.length > 0
}

async function decide(id: string, verdict: 'approved' | 'rejected',
                      reason?: RejectReason): Promise<void> {
  try {
    await api.review(id, verdict, reason)
  } catch (err) {
    setStatus(String(err), true)
  }
  await refreshPending()
  await refreshStats()
}

async function refreshStats(): Promise<void> {
  const stats = await api.stats()
  el('stat-speakers').textContent = String(stats.total_speakers)
  el('stat-bytes').textContent = `${(stats.total_bytes / 1024 / 1024).toFixed(1)} MB`
  el('stat-pending').textContent = String(stats.pending_review)
  const rows = Object.entries(stats.per_word_counts)
  const max = Math.max(1, ...rows.map(([, n]) => n))
  el('stat-chart').innerHTML = rows
    .map(([label, n]) =>
      `<div class="bar-row"><span class="bar-label">${label}</span>` +
      `<div class="bar" style="width:${(100 * n) / max}%"></div>` +
      `<span class="bar-count">${n}</span></div>`)
    .join('\n')
}

function route(): void {
  const reviewing = window.location.hash.startsWith('#/review')
  el('record-view').hidden = reviewing
  el('review-view').hidden = !reviewing
  if (reviewing) {
    refreshPending().catch((err) => setStatus(String(err), true))
    refreshStats().catch(() => undefined)
  } else {
    refreshWords().catch((err) => setStatus(String(err), true))
    drainQueue().catch(() => undefined)
  }
}

window.addEventListener('hashchange', route)
window.addEventListener('DOMContentLoaded', () => {
  el('take-confirm').addEventListener('click', () => void confirmTake())
  el('take-discard').addEventListener('click', () => {
    lastTake = null
    el('take-panel').hidden = true
    setStatus('Take discarded.')
  })
  route()
})
