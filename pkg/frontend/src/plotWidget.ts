/**
 * Interactive plot widget bound to one dataset.
 *
 * The widget is pure client state: chart kind (line or bar), the x column,
 * one or more numeric y columns, and a row-range selection. Every state
 * change re-renders the SVG locally; nothing ever goes back to the server.
 */

import { numericColumns } from './table.js'
import { TableBody } from './types.js'

export type ChartKind = 'line' | 'bar'

export interface PlotState {
  kind: ChartKind
  x: string
  y: string[]
  rowStart: number
  rowEnd: number // exclusive
}

const WIDTH = 360
const HEIGHT = 180
const PAD = 24

export class PlotWidget {
  readonly root: HTMLElement
  private readonly chartHost: HTMLElement
  private readonly validation: HTMLElement
  private state: PlotState

  constructor(
    private readonly doc: Document,
    private readonly data: TableBody,
    initial?: Partial<PlotState>,
  ) {
    const numeric = numericColumns(data)
    const defaultY = numeric.find(c => c !== data.columns[0])
    this.state = {
      kind: initial?.kind ?? 'line',
      x: initial?.x ?? data.columns[0],
      y: initial?.y ?? (defaultY ? [defaultY] : []),
      rowStart: initial?.rowStart ?? 0,
      rowEnd: initial?.rowEnd ?? data.rows.length,
    }
    this.root = doc.createElement('div')
    this.root.className = 'plot-widget'
    this.validation = doc.createElement('p')
    this.validation.className = 'plot-validation'
    this.validation.hidden = true
    this.chartHost = doc.createElement('div')
    this.chartHost.className = 'plot-chart'
    this.root.appendChild(this.validation)
    this.root.appendChild(this.chartHost)
    this.render()
  }

  getState(): PlotState {
    return { ...this.state, y: [...this.state.y] }
  }

  /**
   * Apply a state change and re-render. Invalid changes (non-numeric y
   * column, range outside the data) surface an inline validation message
   * and leave the chart and state unchanged.
   */
  update(change: Partial<PlotState>): boolean {
    const next: PlotState = {
      ...this.state,
      ...change,
      y: change.y ? [...change.y] : [...this.state.y],
    }
    const problem = this.validate(next)
    if (problem !== null) {
      this.validation.textContent = problem
      this.validation.hidden = false
      return false
    }
    this.validation.hidden = true
    this.state = next
    this.render()
    return true
  }

  private validate(state: PlotState): string | null {
    const numeric = new Set(numericColumns(this.data))
    for (const column of [state.x, ...state.y]) {
      if (!this.data.columns.includes(column)) {
        return `unknown column '${column}'`
      }
    }
    if (state.y.length === 0) {
      return 'select at least one y column'
    }
    for (const column of state.y) {
      if (!numeric.has(column)) {
        return `column '${column}' is not numeric`
      }
    }
    if (state.rowStart < 0 || state.rowEnd > this.data.rows.length || state.rowStart >= state.rowEnd) {
      return `row range must lie within 0..${this.data.rows.length}`
    }
    return null
  }

  private selectedRows(): unknown[][] {
    return this.data.rows.slice(this.state.rowStart, this.state.rowEnd)
  }

  private render(): void {
    const svg = this.doc.createElementNS('http://www.w3.org/2000/svg', 'svg')
    svg.setAttribute('viewBox', `0 0 ${WIDTH} ${HEIGHT}`)
    svg.setAttribute('data-kind', this.state.kind)
    const rows = this.selectedRows()
    const yIndexes = this.state.y.map(c => this.data.columns.indexOf(c))
    const values = yIndexes.map(index => rows.map(row => Number(row[index])))
    const flat = values.flat()
    const max = flat.length ? Math.max(...flat, 0) : 1
    const min = flat.length ? Math.min(...flat, 0) : 0
    const span = max - min || 1
    const innerW = WIDTH - 2 * PAD
    const innerH = HEIGHT - 2 * PAD
    const scaleY = (v: number) => HEIGHT - PAD - ((v - min) / span) * innerH

    values.forEach((series, seriesIdx) => {
      if (this.state.kind === 'line') {
        const step = series.length > 1 ? innerW / (series.length - 1) : 0
        const points = series
          .map((v, i) => `${(PAD + i * step).toFixed(1)},${scaleY(v).toFixed(1)}`)
          .join(' ')
        const line = this.doc.createElementNS('http://www.w3.org/2000/svg', 'polyline')
        line.setAttribute('points', points)
        line.setAttribute('fill', 'none')
        line.setAttribute('data-series', this.state.y[seriesIdx])
        svg.appendChild(line)
      } else {
        const groupW = innerW / Math.max(series.length, 1)
        const barW = groupW / (values.length + 0.5)
        series.forEach((v, i) => {
          const rect = this.doc.createElementNS('http://www.w3.org/2000/svg', 'rect')
          rect.setAttribute('x', (PAD + i * groupW + seriesIdx * barW).toFixed(1))
          rect.setAttribute('y', Math.min(scaleY(v), scaleY(0)).toFixed(1))
          rect.setAttribute('width', barW.toFixed(1))
          rect.setAttribute('height', Math.abs(scaleY(0) - scaleY(v)).toFixed(1))
          rect.setAttribute('data-series', this.state.y[seriesIdx])
          svg.appendChild(rect)
        })
      }
    })
    this.chartHost.replaceChildren(svg)
  }

  /** Rendered data marks: polylines for line charts, rects for bars. */
  marks(): Element[] {
    return Array.from(this.chartHost.querySelectorAll('polyline, rect'))
  }

  validationMessage(): string | null {
    return this.validation.hidden ? null : this.validation.textContent
  }
}
