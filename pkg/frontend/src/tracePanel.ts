/**
 * Collapsible reasoning trace.
 *
 * One entry per non-terminal stream event, in arrival order, so the user can
 * inspect what the agent did instead of treating it as a black box.
 */

import { StreamEvent, isTerminal } from './types.js'

export class TracePanel {
  readonly root: HTMLElement

  constructor(private readonly doc: Document) {
    this.root = doc.createElement('div')
    this.root.className = 'trace-panel'
  }

  addEvent(event: StreamEvent): HTMLElement | null {
    if (isTerminal(event)) {
      return null
    }
    const entry = this.doc.createElement('details')
    entry.className = `trace-entry trace-${event.event}`
    const summary = this.doc.createElement('summary')
    summary.textContent = this.summarize(event)
    entry.appendChild(summary)
    const body = this.doc.createElement('pre')
    body.textContent = JSON.stringify(event.payload, null, 1)
    entry.appendChild(body)
    if (event.event === 'tool_result' && event.payload['is_error'] === true) {
      entry.classList.add('trace-error')
    }
    this.root.appendChild(entry)
    return entry
  }

  private summarize(event: StreamEvent): string {
    switch (event.event) {
      case 'step_started':
        return `step ${event.payload['step']}`
      case 'tool_call':
        return `call ${event.payload['tool_name']}`
      case 'tool_result': {
        const flag = event.payload['is_error'] === true ? 'failed' : 'ok'
        return `result ${event.payload['tool_name']} (${flag})`
      }
      case 'sql_generated':
        return 'generated SQL'
      case 'dataset':
        return 'result dataset'
      case 'prediction':
        return `prediction ${event.payload['output_feature'] ?? ''}`.trim()
      default:
        return event.event
    }
  }

  entryCount(): number {
    return this.root.querySelectorAll('.trace-entry').length
  }
}
