/** Result-table rendering shared by the chat view and the SQL panel. */

import { TableBody } from './types.js'

export function renderTable(doc: Document, body: TableBody): HTMLTableElement {
  const table = doc.createElement('table')
  table.className = 'result-table'
  const head = doc.createElement('tr')
  for (const column of body.columns) {
    const th = doc.createElement('th')
    th.textContent = column
    head.appendChild(th)
  }
  table.appendChild(head)
  for (const row of body.rows) {
    const tr = doc.createElement('tr')
    for (const cell of row) {
      const td = doc.createElement('td')
      td.textContent = cell === null || cell === undefined ? '' : String(cell)
      tr.appendChild(td)
    }
    table.appendChild(tr)
  }
  return table
}

export function numericColumns(body: TableBody): string[] {
  return body.columns.filter((_, index) =>
    body.rows.every(row => {
      const value = row[index]
      return value === null || typeof value === 'number' || (typeof value === 'string' && value !== '' && !Number.isNaN(Number(value)))
    }),
  )
}
