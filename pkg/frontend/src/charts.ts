/** Hand-rolled SVG charts: geometry is computed by pure functions so the
 * scaling/bucketing logic is unit-testable without a DOM. */

import type { HourlyBucket, MetricSample } from "./types.js";

export function linearScale(
  d0: number,
  d1: number,
  r0: number,
  r1: number,
): (x: number) => number {
  const span = d1 - d0;
  if (span === 0) return () => (r0 + r1) / 2;
  return (x) => r0 + ((x - d0) / span) * (r1 - r0);
}

/** Round tick values covering [min, max], at most `count` of them. */
export function niceTicks(min: number, max: number, count = 5): number[] {
  if (max <= min) return [min];
  const rawStep = (max - min) / count;
  const magnitude = 10 ** Math.floor(Math.log10(rawStep));
  let step = magnitude;
  for (const multiple of [1, 2, 5, 10]) {
    if (magnitude * multiple >= rawStep) {
      step = magnitude * multiple;
      break;
    }
  }
  const ticks: number[] = [];
  for (let v = Math.ceil(min / step) * step; v <= max + 1e-9; v += step) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

const HOUR_S = 3600;

/** Fold one live sample into hourly buckets, zero-filling any gap. */
export function appendHourly(buckets: HourlyBucket[], t: number): void {
  const hour = Math.floor(t / HOUR_S) * HOUR_S;
  const last = buckets[buckets.length - 1];
  if (last && last.hour === hour) {
    last.count += 1;
    return;
  }
  for (let h = last ? last.hour + HOUR_S : hour; h < hour; h += HOUR_S) {
    buckets.push({ hour: h, count: 0 });
  }
  buckets.push({ hour, count: 1 });
}

export interface BarGeometry {
  x: number;
  y: number;
  width: number;
  height: number;
  hour: number;
  count: number;
}

export function barGeometry(
  buckets: HourlyBucket[],
  width: number,
  height: number,
  pad = 24,
): BarGeometry[] {
  if (!buckets.length) return [];
  const maxCount = Math.max(1, ...buckets.map((b) => b.count));
  const innerWidth = width - 2 * pad;
  const innerHeight = height - 2 * pad;
  const barWidth = innerWidth / buckets.length;
  return buckets.map((bucket, i) => {
    const barHeight = (bucket.count / maxCount) * innerHeight;
    return {
      x: pad + i * barWidth,
      y: pad + innerHeight - barHeight,
      width: Math.max(1, barWidth - 1),
      height: barHeight,
      hour: bucket.hour,
      count: bucket.count,
    };
  });
}

export function svgBarChart(buckets: HourlyBucket[], width = 720, height = 220): string {
  const bars = barGeometry(buckets, width, height)
    .map(
      (b) =>
        `<rect x="${b.x.toFixed(1)}" y="${b.y.toFixed(1)}" width="${b.width.toFixed(1)}" ` +
        `height="${b.height.toFixed(1)}" class="bar" data-hour="${b.hour}" data-count="${b.count}">` +
        `<title>h${Math.floor(b.hour / 3600)}: ${b.count}</title></rect>`,
    )
    .join("");
  const maxCount = buckets.length ? Math.max(...buckets.map((b) => b.count)) : 0;
  return (
    `<svg viewBox="0 0 ${width} ${height}" role="img">` +
    `<text x="4" y="14" class="axis">max ${maxCount}/h</text>${bars}</svg>`
  );
}

export interface LineSeries {
  label: string;
  samples: MetricSample[];
}

export function polylinePoints(
  samples: MetricSample[],
  width: number,
  height: number,
  tMin: number,
  tMax: number,
  vMin: number,
  vMax: number,
  pad = 24,
): string {
  const sx = linearScale(tMin, tMax, pad, width - pad);
  const sy = linearScale(vMin, vMax, height - pad, pad);
  return samples.map((s) => `${sx(s.t).toFixed(1)},${sy(s.value).toFixed(1)}`).join(" ");
}

const SERIES_COLORS = ["#4c9f70", "#3e7cb1", "#d17a22", "#a34f9e", "#c13f3f", "#7a7d32", "#2aa198", "#6c71c4", "#b58900", "#586e75"];

export function svgLineChart(seriesList: LineSeries[], width = 720, height = 220): string {
  const all = seriesList.flatMap((s) => s.samples);
  if (!all.length) return `<svg viewBox="0 0 ${width} ${height}"><text x="8" y="20">no samples</text></svg>`;
  const tMin = Math.min(...all.map((s) => s.t));
  const tMax = Math.max(...all.map((s) => s.t));
  const vMax = Math.max(255, ...all.map((s) => s.value));
  const lines = seriesList
    .filter((s) => s.samples.length)
    .map((s, i) => {
      const points = polylinePoints(s.samples, width, height, tMin, tMax, 0, vMax);
      const color = SERIES_COLORS[i % SERIES_COLORS.length];
      return `<polyline fill="none" stroke="${color}" stroke-width="1.5" points="${points}" data-series="${s.label}"><title>${s.label}</title></polyline>`;
    })
    .join("");
  const legend = seriesList
    .map((s, i) => `<tspan fill="${SERIES_COLORS[i % SERIES_COLORS.length]}">■ ${s.label}  </tspan>`)
    .join("");
  return `<svg viewBox="0 0 ${width} ${height}" role="img"><text x="4" y="14" class="axis">${legend}</text>${lines}</svg>`;
}
