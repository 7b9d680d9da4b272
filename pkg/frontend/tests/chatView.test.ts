import { readFileSync } from 'fs'
import { join } from 'path'
import { describe, expect, it } from 'vitest'

import { ChatView } from '../src/chatView.js'
import { parseSse } from '../src/sse.js'
import { isTerminal } from '../src/types.js'

const fixture = (name: string) =>
  parseSse(readFileSync(join(__dirname, '..', 'fixtures', name), 'utf-8'))

function replay(name: string, view: ChatView) {
  const events = fixture(name)
  view.streamStarted()
  for (const event of events) {
    view.handleEvent(event)
  }
  view.connectionClosed()
  return events
}

describe('fixture replay', () => {
  it('direct answer renders a single assistant bubble', () => {
    const view = new ChatView(document)
    const events = replay('direct_answer.sse.txt', view)
    expect(view.assistantBubbles()).toHaveLength(1)
    expect(view.errorBubbles()).toHaveLength(0)
    expect(view.inProgress()).toBe(false)
    expect(view.retryBannerVisible()).toBe(false)
    // view/event bijection: one trace entry per non-terminal event
    expect(view.trace.entryCount()).toBe(events.filter(e => !isTerminal(e)).length)
  })

  it('the analytical flow populates the SQL side panel and renders tables', () => {
    const view = new ChatView(document)
    const events = replay('rag_sql_flow.sse.txt', view)
    expect(view.assistantBubbles()).toHaveLength(1)
    expect(view.trace.entryCount()).toBe(events.filter(e => !isTerminal(e)).length)

    // sql panel carries the generated SQL and its dataset; hidden until toggled
    expect(view.sqlToggleAvailable()).toBe(true)
    expect(view.sqlPanel.visible).toBe(false)
    expect(view.sqlPanel.toggle()).toBe(true)
    expect(view.sqlPanel.sqlText()).toContain('SELECT')
    expect(view.sqlPanel.root.querySelectorAll('table')).toHaveLength(1)

    // the final bubble renders the table attachments from the sub-agents
    const bubble = view.assistantBubbles()[0]
    expect(bubble.querySelectorAll('table').length).toBeGreaterThan(0)
    expect(bubble.querySelectorAll('img')).toHaveLength(1)
  })

  it('the error flow renders an error bubble and closes the stream', () => {
    const view = new ChatView(document)
    replay('error_flow.sse.txt', view)
    expect(view.errorBubbles()).toHaveLength(1)
    expect(view.assistantBubbles()).toHaveLength(0)
    expect(view.inProgress()).toBe(false)
    expect(view.retryBannerVisible()).toBe(false)
    expect(view.errorBubbles()[0].textContent).toContain('unavailable')
  })

  it('replaying the same fixture twice yields identical view structure', () => {
    const render = () => {
      const view = new ChatView(document)
      replay('rag_sql_flow.sse.txt', view)
      return view.root.innerHTML
    }
    expect(render()).toBe(render())
  })
})

describe('connection drop', () => {
  it('shows the retry banner and resumes from history', () => {
    let resumed = 0
    const view = new ChatView(document, () => {
      resumed += 1
    })
    const events = fixture('rag_sql_flow.sse.txt')
    view.streamStarted()
    for (const event of events.slice(0, 3)) {
      view.handleEvent(event)
    }
    view.connectionClosed() // dropped before the terminal event
    expect(view.retryBannerVisible()).toBe(true)
    const button = view.root.querySelector('.retry-banner button') as HTMLButtonElement
    button.click()
    expect(resumed).toBe(1)
    expect(view.retryBannerVisible()).toBe(false)
  })
})

describe('sql toggle', () => {
  it('is hidden for messages without a sql attachment', () => {
    const view = new ChatView(document)
    replay('direct_answer.sse.txt', view)
    expect(view.sqlToggleAvailable()).toBe(false)
    expect(view.sqlPanel.toggle()).toBe(false) // nothing to show
  })

  it('shows only the final repaired SQL after repeated updates', () => {
    const view = new ChatView(document)
    view.streamStarted()
    view.handleEvent({ event: 'sql_generated', seq: 1, payload: { sql: 'SELECT wrong FROM jobs' } })
    view.handleEvent({ event: 'sql_generated', seq: 2, payload: { sql: 'SELECT node_count FROM jobs' } })
    view.handleEvent({ event: 'final', seq: 3, payload: { text: 'done', attachments: [], routing_class: 'SQL' } })
    view.sqlPanel.toggle()
    expect(view.sqlPanel.sqlText()).toBe('SELECT node_count FROM jobs')
  })
})
