import { readFileSync } from 'fs'
import { join } from 'path'
import { describe, expect, it } from 'vitest'

import { parseSse, SseRelay } from '../src/sse.js'
import { StreamEvent, isTerminal } from '../src/types.js'

const fixture = (name: string) => readFileSync(join(__dirname, '..', 'fixtures', name), 'utf-8')

describe('parseSse', () => {
  it('parses the direct-answer fixture', () => {
    const events = parseSse(fixture('direct_answer.sse.txt'))
    expect(events.length).toBeGreaterThan(0)
    expect(events[events.length - 1].event).toBe('final')
    expect(events[events.length - 1].payload['routing_class']).toBe('NONE')
  })

  it('sequence numbers strictly increase', () => {
    const events = parseSse(fixture('rag_sql_flow.sse.txt'))
    const seqs = events.map(e => e.seq)
    for (let i = 1; i < seqs.length; i++) {
      expect(seqs[i]).toBeGreaterThan(seqs[i - 1])
    }
  })

  it('every fixture has exactly one terminal event, at the end', () => {
    for (const name of ['direct_answer.sse.txt', 'rag_sql_flow.sse.txt', 'error_flow.sse.txt']) {
      const events = parseSse(fixture(name))
      const terminals = events.filter(isTerminal)
      expect(terminals).toHaveLength(1)
      expect(events[events.length - 1]).toBe(terminals[0])
    }
  })

  it('ignores partial trailing frames until completed', () => {
    const whole = fixture('direct_answer.sse.txt')
    const cut = whole.slice(0, whole.length - 20)
    const partial = parseSse(cut)
    const full = parseSse(whole)
    expect(partial.length).toBeLessThan(full.length)
  })
})

describe('SseRelay', () => {
  function collect() {
    const seen: StreamEvent[] = []
    const flags = { dropped: false, done: false }
    const relay = new SseRelay({
      onEvent: e => seen.push(e),
      onDrop: () => (flags.dropped = true),
      onDone: () => (flags.done = true),
    })
    return { relay, seen, flags }
  }

  it('delivers events exactly once across chunk boundaries', () => {
    const whole = fixture('rag_sql_flow.sse.txt')
    const { relay, seen, flags } = collect()
    const mid = Math.floor(whole.length / 3)
    relay.push(whole.slice(0, mid))
    relay.push(whole.slice(mid, 2 * mid))
    relay.push(whole.slice(2 * mid))
    relay.end()
    expect(seen.map(e => e.seq)).toEqual(parseSse(whole).map(e => e.seq))
    expect(flags.done).toBe(true)
    expect(flags.dropped).toBe(false)
  })

  it('declares a drop when the stream ends before a terminal event', () => {
    const whole = fixture('rag_sql_flow.sse.txt')
    const { relay, flags } = collect()
    relay.push(whole.slice(0, 200))
    relay.end()
    expect(flags.dropped).toBe(true)
    expect(flags.done).toBe(false)
  })
})
