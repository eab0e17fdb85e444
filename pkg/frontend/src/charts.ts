/**
 * Minimal SVG chart builders. Every element that encodes an API number
 * carries it verbatim in a data attribute so tests (and curious users)
 * can trace what is drawn back to the payload it came from.
 */

import type { MarginalHistogram, SurfacePoints } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgElement(width: number, height: number, cls: string): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  svg.setAttribute("class", cls);
  return svg;
}

function line(
  x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1,
): SVGLineElement {
  const el = document.createElementNS(SVG_NS, "line");
  el.setAttribute("x1", String(x1));
  el.setAttribute("y1", String(y1));
  el.setAttribute("x2", String(x2));
  el.setAttribute("y2", String(y2));
  el.setAttribute("stroke", stroke);
  el.setAttribute("stroke-width", String(width));
  return el;
}

function scale(domainLo: number, domainHi: number, rangeLo: number, rangeHi: number) {
  const span = domainHi - domainLo || 1;
  return (v: number) => rangeLo + ((v - domainLo) / span) * (rangeHi - rangeLo);
}

/** Utility curve with the optimum marked by an arrowed label. */
export function utilityCurve(surface: SurfacePoints, width = 560, height = 220): SVGSVGElement {
  const pad = { left: 46, right: 12, top: 24, bottom: 28 };
  const svg = svgElement(width, height, "chart utility-curve");
  const lo = Math.min(...surface.values);
  const hi = Math.max(...surface.values);
  const x = scale(surface.designs[0], surface.designs[surface.designs.length - 1],
    pad.left, width - pad.right);
  const y = scale(lo, hi, height - pad.bottom, pad.top);

  const path = document.createElementNS(SVG_NS, "path");
  path.setAttribute(
    "d",
    surface.designs
      .map((d, i) => `${i === 0 ? "M" : "L"}${x(d).toFixed(2)},${y(surface.values[i]).toFixed(2)}`)
      .join(""),
  );
  path.setAttribute("fill", "none");
  path.setAttribute("stroke", "#2563eb");
  path.setAttribute("stroke-width", "1.6");
  svg.appendChild(path);

  const axis = line(pad.left, height - pad.bottom, width - pad.right,
    height - pad.bottom, "#94a3b8");
  svg.appendChild(axis);

  const starIdx = surface.designs.indexOf(surface.d_star);
  const starValue = surface.values[starIdx];
  const marker = document.createElementNS(SVG_NS, "g");
  marker.setAttribute("class", "argmax-marker");
  marker.setAttribute("data-design", String(surface.d_star));
  marker.setAttribute("data-value", String(starValue));
  const mx = x(surface.d_star);
  const my = y(starValue);
  marker.appendChild(line(mx, my - 26, mx, my - 6, "#dc2626", 1.6));
  const tip = document.createElementNS(SVG_NS, "path");
  tip.setAttribute("d", `M${mx - 4},${my - 12} L${mx},${my - 5} L${mx + 4},${my - 12} Z`);
  tip.setAttribute("fill", "#dc2626");
  marker.appendChild(tip);
  const label = document.createElementNS(SVG_NS, "text");
  label.setAttribute("x", String(mx));
  label.setAttribute("y", String(my - 31));
  label.setAttribute("text-anchor", "middle");
  label.setAttribute("class", "argmax-label");
  label.textContent = `d* = ${surface.d_star}`;
  marker.appendChild(label);
  svg.appendChild(marker);
  return svg;
}

/** Horizontal probability bars, one per candidate model. */
export function probabilityBars(
  modelIds: number[], probabilities: number[], width = 280,
): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "prob-bars";
  probabilities.forEach((p, i) => {
    const row = document.createElement("div");
    row.className = "prob-row";
    const name = document.createElement("span");
    name.className = "prob-name";
    name.textContent = `model ${modelIds[i]}`;
    const track = document.createElement("div");
    track.className = "prob-track";
    track.style.width = `${width}px`;
    const bar = document.createElement("div");
    bar.className = "prob-bar";
    bar.dataset.model = String(modelIds[i]);
    bar.dataset.prob = String(p);
    bar.style.width = `${(p * width).toFixed(1)}px`;
    const value = document.createElement("span");
    value.className = "prob-value";
    value.textContent = p.toFixed(3);
    track.appendChild(bar);
    row.append(name, track, value);
    wrap.appendChild(row);
  });
  return wrap;
}

/** One marginal density sketch: posterior histogram with prior overlay. */
export function marginalSketch(
  name: string, hist: MarginalHistogram, width = 170, height = 90,
): SVGSVGElement {
  const svg = svgElement(width, height, "chart marginal-sketch");
  svg.dataset.coordinate = name;
  svg.dataset.mean = String(hist.mean);
  svg.dataset.sd = String(hist.sd);
  const peak = Math.max(...hist.density, ...hist.prior_density, 1e-12);
  const x = scale(hist.edges[0], hist.edges[hist.edges.length - 1], 2, width - 2);
  const y = scale(0, peak, height - 12, 4);

  const bars = document.createElementNS(SVG_NS, "path");
  let d = `M${x(hist.edges[0]).toFixed(2)},${y(0).toFixed(2)}`;
  hist.density.forEach((v, i) => {
    d += `L${x(hist.edges[i]).toFixed(2)},${y(v).toFixed(2)}`
      + `L${x(hist.edges[i + 1]).toFixed(2)},${y(v).toFixed(2)}`;
  });
  d += `L${x(hist.edges[hist.edges.length - 1]).toFixed(2)},${y(0).toFixed(2)}Z`;
  bars.setAttribute("d", d);
  bars.setAttribute("class", "marginal-posterior");
  bars.setAttribute("fill", "#93c5fd");
  bars.setAttribute("stroke", "#3b82f6");
  bars.setAttribute("stroke-width", "0.6");
  svg.appendChild(bars);

  const prior = document.createElementNS(SVG_NS, "path");
  const centers = hist.edges.slice(0, -1).map((e, i) => 0.5 * (e + hist.edges[i + 1]));
  prior.setAttribute(
    "d",
    centers
      .map((c, i) => `${i === 0 ? "M" : "L"}${x(c).toFixed(2)},${y(hist.prior_density[i]).toFixed(2)}`)
      .join(""),
  );
  prior.setAttribute("class", "marginal-prior");
  prior.setAttribute("fill", "none");
  prior.setAttribute("stroke", "#475569");
  prior.setAttribute("stroke-dasharray", "4 3");
  svg.appendChild(prior);

  const label = document.createElementNS(SVG_NS, "text");
  label.setAttribute("x", "4");
  label.setAttribute("y", String(height - 2));
  label.setAttribute("class", "marginal-label");
  label.textContent = name;
  svg.appendChild(label);
  return svg;
}

/** Sparkline of log precision across iterations. */
export function precisionSparkline(values: number[], width = 180, height = 44): SVGSVGElement {
  const svg = svgElement(width, height, "chart precision-sparkline");
  const finite = values.filter((v) => Number.isFinite(v));
  if (finite.length === 0) return svg;
  const lo = Math.min(...finite);
  const hi = Math.max(...finite);
  const x = scale(0, Math.max(values.length - 1, 1), 4, width - 4);
  const y = scale(lo, hi, height - 6, 6);
  const path = document.createElementNS(SVG_NS, "path");
  path.setAttribute(
    "d",
    values
      .map((v, i) => `${i === 0 ? "M" : "L"}${x(i).toFixed(2)},${y(Number.isFinite(v) ? v : lo).toFixed(2)}`)
      .join(""),
  );
  path.setAttribute("fill", "none");
  path.setAttribute("stroke", "#047857");
  path.setAttribute("stroke-width", "1.4");
  svg.appendChild(path);
  values.forEach((v, i) => {
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", x(i).toFixed(2));
    dot.setAttribute("cy", y(Number.isFinite(v) ? v : lo).toFixed(2));
    dot.setAttribute("r", "2");
    dot.setAttribute("fill", "#047857");
    dot.dataset.value = String(v);
    svg.appendChild(dot);
  });
  return svg;
}
