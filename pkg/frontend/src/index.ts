export { ChatView } from './chatView.js'
export { PlotWidget } from './plotWidget.js'
export { SqlPanel } from './sqlPanel.js'
export { TracePanel } from './tracePanel.js'
export { parseSse, SessionApi, SseRelay } from './sse.js'
export { renderTable, numericColumns } from './table.js'
export type { Attachment, EventKind, FinalPayload, StreamEvent, TableBody } from './types.js'

import { ChatView } from './chatView.js'
import { SessionApi } from './sse.js'
import { StreamEvent } from './types.js'

/**
 * Wire a live chat against the platform service. Creates a session on first
 * send; the retry banner replays the stored history after a dropped stream.
 */
export function bootstrap(host: HTMLElement, baseUrl = ''): { send(text: string): Promise<void> } {
  const doc = host.ownerDocument
  const api = new SessionApi(baseUrl)
  let sessionId: string | null = null
  const view = new ChatView(doc, async () => {
    if (sessionId === null) return
    const info = await api.getSession(sessionId)
    for (const message of info.messages) {
      if (message['role'] === 'assistant' && message['content']) {
        view.handleEvent({
          event: 'final',
          seq: 0,
          payload: { text: message['content'], attachments: message['attachments'] ?? [] },
        } as StreamEvent)
      }
    }
  })
  host.appendChild(view.root)

  const form = doc.createElement('form')
  const input = doc.createElement('input')
  input.setAttribute('type', 'text')
  const button = doc.createElement('button')
  button.textContent = 'Send'
  form.appendChild(input)
  form.appendChild(button)
  host.appendChild(form)

  async function send(text: string): Promise<void> {
    if (sessionId === null) {
      sessionId = await api.createSession()
    }
    view.addUserMessage(text)
    view.streamStarted()
    await api.sendMessage(sessionId, text, {
      onEvent: event => view.handleEvent(event),
      onDrop: () => view.connectionClosed(),
      onDone: () => view.connectionClosed(),
    })
  }

  form.addEventListener('submit', event => {
    event.preventDefault()
    const text = input.value.trim()
    if (text) {
      input.value = ''
      void send(text)
    }
  })
  return { send }
}
