/** Wire types shared with the platform service. */

export type EventKind =
  | 'step_started'
  | 'tool_call'
  | 'tool_result'
  | 'sql_generated'
  | 'dataset'
  | 'prediction'
  | 'final'
  | 'error'

export interface StreamEvent {
  event: EventKind
  seq: number
  payload: Record<string, unknown>
}

export const TERMINAL_EVENTS: ReadonlySet<EventKind> = new Set(['final', 'error'])

export interface TableBody {
  columns: string[]
  rows: unknown[][]
}

export interface Attachment {
  kind: 'table' | 'image_ref' | 'plot_spec' | 'sql_text'
  body: Record<string, unknown>
}

export interface FinalPayload {
  text: string
  attachments: Attachment[]
  routing_class: string
}

export function isTerminal(event: StreamEvent): boolean {
  return TERMINAL_EVENTS.has(event.event)
}
