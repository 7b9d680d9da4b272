/**
 * SQL side panel: the final generated SQL with its result table and plot,
 * shown on demand next to the chat.
 */

import { PlotWidget } from './plotWidget.js'
import { renderTable, numericColumns } from './table.js'
import { TableBody } from './types.js'

export class SqlPanel {
  readonly root: HTMLElement
  private readonly sqlBlock: HTMLElement
  private readonly resultHost: HTMLElement
  private hasContent = false

  constructor(private readonly doc: Document) {
    this.root = doc.createElement('aside')
    this.root.className = 'sql-panel'
    this.root.hidden = true
    this.sqlBlock = doc.createElement('pre')
    this.sqlBlock.className = 'sql-text'
    this.resultHost = doc.createElement('div')
    this.resultHost.className = 'sql-result'
    this.root.appendChild(this.sqlBlock)
    this.root.appendChild(this.resultHost)
  }

  /** Repeated updates within one response keep only the final SQL. */
  setSql(sql: string): HTMLElement {
    this.sqlBlock.textContent = sql
    this.hasContent = true
    return this.sqlBlock
  }

  setDataset(body: TableBody): HTMLElement {
    this.resultHost.replaceChildren(renderTable(this.doc, body))
    if (numericColumns(body).length > 0 && body.rows.length > 0) {
      this.resultHost.appendChild(new PlotWidget(this.doc, body).root)
    }
    this.hasContent = true
    return this.resultHost
  }

  get available(): boolean {
    return this.hasContent
  }

  get visible(): boolean {
    return !this.root.hidden
  }

  toggle(): boolean {
    if (!this.hasContent) {
      return false
    }
    this.root.hidden = !this.root.hidden
    return !this.root.hidden
  }

  sqlText(): string {
    return this.sqlBlock.textContent ?? ''
  }
}
