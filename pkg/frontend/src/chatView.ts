/**
 * Incremental chat view over one event stream.
 *
 * Every stream event appends or updates exactly one view element; a terminal
 * event (final or error) closes the in-progress indicator, and a dropped
 * connection shows a retry banner whose action replays the session history.
 */

import { PlotWidget } from './plotWidget.js'
import { SqlPanel } from './sqlPanel.js'
import { renderTable } from './table.js'
import { TracePanel } from './tracePanel.js'
import { Attachment, FinalPayload, StreamEvent, TableBody } from './types.js'

export class ChatView {
  readonly root: HTMLElement
  readonly trace: TracePanel
  readonly sqlPanel: SqlPanel
  private readonly messages: HTMLElement
  private readonly progress: HTMLElement
  private readonly banner: HTMLElement
  private readonly sqlToggle: HTMLButtonElement
  private terminalSeen = false

  constructor(
    private readonly doc: Document,
    private readonly resumeFromHistory: () => void = () => {},
  ) {
    this.root = doc.createElement('div')
    this.root.className = 'chat-view'
    this.messages = doc.createElement('div')
    this.messages.className = 'chat-messages'
    this.progress = doc.createElement('div')
    this.progress.className = 'chat-progress'
    this.progress.textContent = 'working...'
    this.progress.hidden = true
    this.banner = doc.createElement('div')
    this.banner.className = 'retry-banner'
    this.banner.hidden = true
    const retry = doc.createElement('button')
    retry.textContent = 'Connection lost - resume'
    retry.addEventListener('click', () => {
      this.banner.hidden = true
      this.resumeFromHistory()
    })
    this.banner.appendChild(retry)
    this.trace = new TracePanel(doc)
    this.sqlPanel = new SqlPanel(doc)
    this.sqlToggle = doc.createElement('button')
    this.sqlToggle.className = 'sql-toggle'
    this.sqlToggle.textContent = 'Show SQL'
    this.sqlToggle.hidden = true
    this.sqlToggle.addEventListener('click', () => {
      const shown = this.sqlPanel.toggle()
      this.sqlToggle.textContent = shown ? 'Hide SQL' : 'Show SQL'
    })
    this.root.appendChild(this.messages)
    this.root.appendChild(this.trace.root)
    this.root.appendChild(this.progress)
    this.root.appendChild(this.banner)
    this.root.appendChild(this.sqlToggle)
    this.root.appendChild(this.sqlPanel.root)
  }

  addUserMessage(text: string): void {
    const bubble = this.doc.createElement('div')
    bubble.className = 'bubble user'
    bubble.textContent = text
    this.messages.appendChild(bubble)
  }

  streamStarted(): void {
    this.terminalSeen = false
    this.progress.hidden = false
    this.banner.hidden = true
  }

  /** Route one stream event into the view. */
  handleEvent(event: StreamEvent): void {
    switch (event.event) {
      case 'sql_generated':
        this.trace.addEvent(event)
        this.sqlPanel.setSql(String(event.payload['sql'] ?? ''))
        this.sqlToggle.hidden = false
        break
      case 'dataset':
        this.trace.addEvent(event)
        this.sqlPanel.setDataset(event.payload as unknown as TableBody)
        break
      case 'final':
        this.terminalSeen = true
        this.progress.hidden = true
        this.addAssistantBubble(event.payload as unknown as FinalPayload)
        break
      case 'error': {
        this.terminalSeen = true
        this.progress.hidden = true
        const bubble = this.doc.createElement('div')
        bubble.className = 'bubble error'
        bubble.textContent = String(event.payload['message'] ?? 'request failed')
        this.messages.appendChild(bubble)
        break
      }
      default:
        this.trace.addEvent(event)
    }
  }

  /** Underlying connection closed; show the retry banner if mid-response. */
  connectionClosed(): void {
    if (!this.terminalSeen) {
      this.progress.hidden = true
      this.banner.hidden = false
    }
  }

  private addAssistantBubble(payload: FinalPayload): void {
    const bubble = this.doc.createElement('div')
    bubble.className = 'bubble assistant'
    const text = this.doc.createElement('p')
    text.textContent = payload.text
    bubble.appendChild(text)
    for (const attachment of payload.attachments ?? []) {
      const rendered = this.renderAttachment(attachment)
      if (rendered !== null) {
        bubble.appendChild(rendered)
      }
    }
    this.messages.appendChild(bubble)
  }

  private renderAttachment(attachment: Attachment): HTMLElement | null {
    if (attachment.kind === 'table') {
      const body = attachment.body as unknown as TableBody
      const host = this.doc.createElement('div')
      host.className = 'attachment table'
      host.appendChild(renderTable(this.doc, body))
      if (body.rows.length > 0) {
        host.appendChild(new PlotWidget(this.doc, body).root)
      }
      return host
    }
    if (attachment.kind === 'image_ref') {
      const img = this.doc.createElement('img')
      img.className = 'attachment image'
      img.setAttribute('src', String(attachment.body['uri'] ?? ''))
      img.setAttribute('alt', String(attachment.body['caption'] ?? ''))
      return img
    }
    if (attachment.kind === 'sql_text') {
      // SQL lives in the side panel, not inline in the bubble.
      this.sqlPanel.setSql(String(attachment.body['sql'] ?? ''))
      this.sqlToggle.hidden = false
      return null
    }
    return null
  }

  assistantBubbles(): Element[] {
    return Array.from(this.messages.querySelectorAll('.bubble.assistant'))
  }

  errorBubbles(): Element[] {
    return Array.from(this.messages.querySelectorAll('.bubble.error'))
  }

  inProgress(): boolean {
    return !this.progress.hidden
  }

  retryBannerVisible(): boolean {
    return !this.banner.hidden
  }

  sqlToggleAvailable(): boolean {
    return !this.sqlToggle.hidden
  }
}
