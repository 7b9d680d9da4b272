/** Server-sent-events parsing and the session API client. */

import { EventKind, StreamEvent, isTerminal } from './types.js'

/**
 * Parse a full or partial SSE body into ordered stream events. A trailing
 * line without its newline may still be mid-transfer and is left for the
 * next parse.
 */
export function parseSse(text: string): StreamEvent[] {
  const events: StreamEvent[] = []
  let currentEvent: string | null = null
  const lines = text.split('\n')
  if (!text.endsWith('\n')) {
    lines.pop()
  }
  for (const line of lines) {
    if (line.startsWith('event: ')) {
      currentEvent = line.slice('event: '.length).trim()
    } else if (line.startsWith('data: ') && currentEvent !== null) {
      const data = JSON.parse(line.slice('data: '.length))
      events.push({
        event: currentEvent as EventKind,
        seq: data.seq as number,
        payload: (data.payload ?? {}) as Record<string, unknown>,
      })
      currentEvent = null
    }
  }
  return events
}

export interface StreamConsumer {
  onEvent(event: StreamEvent): void
  /** Called when the connection drops before a terminal event arrived. */
  onDrop(): void
  onDone(): void
}

/**
 * Feed a response body (already received or arriving in chunks) to a
 * consumer. Declares a drop if the stream ends without a terminal event.
 */
export class SseRelay {
  private buffer = ''
  private delivered = 0
  private sawTerminal = false
  private closed = false

  constructor(private readonly consumer: StreamConsumer) {}

  push(chunk: string): void {
    if (this.closed) return
    this.buffer += chunk
    const events = parseSse(this.buffer)
    for (const event of events.slice(this.delivered)) {
      this.delivered += 1
      this.consumer.onEvent(event)
      if (isTerminal(event)) {
        this.sawTerminal = true
      }
    }
  }

  /** The underlying connection ended (normally or not). */
  end(): void {
    if (this.closed) return
    this.closed = true
    if (this.sawTerminal) {
      this.consumer.onDone()
    } else {
      this.consumer.onDrop()
    }
  }
}

export interface SessionInfo {
  session_id: string
  messages: Record<string, unknown>[]
  traces: unknown[]
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

/** Minimal client for the platform's session API. */
export class SessionApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async createSession(): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/sessions`, { method: 'POST' })
    const body = (await resp.json()) as { session_id: string }
    return body.session_id
  }

  async getSession(sessionId: string): Promise<SessionInfo> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/sessions/${sessionId}`)
    if (!resp.ok) {
      const err = (await resp.json()) as { code?: string; message?: string }
      throw new Error(err.message ?? `session fetch failed (${resp.status})`)
    }
    return (await resp.json()) as SessionInfo
  }

  /** Post a message and relay the streamed response to the consumer. */
  async sendMessage(sessionId: string, text: string, consumer: StreamConsumer): Promise<void> {
    const relay = new SseRelay(consumer)
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/api/sessions/${sessionId}/messages`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ text }),
      })
      if (!resp.ok || resp.body === null) {
        relay.push(await resp.text().catch(() => ''))
        relay.end()
        return
      }
      const reader = resp.body.getReader()
      const decoder = new TextDecoder()
      for (;;) {
        const { done, value } = await reader.read()
        if (done) break
        relay.push(decoder.decode(value, { stream: true }))
      }
    } catch {
      // fall through to end(): consumer sees a drop if no terminal arrived
    }
    relay.end()
  }
}
