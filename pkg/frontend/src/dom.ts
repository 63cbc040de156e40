/** Tiny DOM helpers shared by the pages. */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

/**
 * A rendered metric: human-formatted text plus the raw API value in
 * data-value so parity checks (and curious users) see the exact number.
 */
export function metricCell(value: number | null, digits = 4): HTMLElement {
  const cell = el("span", { class: "metric" });
  if (value === null || value === undefined) {
    cell.textContent = "–";
    cell.dataset.value = "null";
  } else {
    cell.textContent = value.toFixed(digits);
    cell.dataset.value = String(value);
  }
  return cell;
}

export function statusLine(parent: HTMLElement, kind: "info" | "error", text: string): void {
  const line = el("div", { class: `status status-${kind}` }, [text]);
  parent.prepend(line);
  if (kind === "info") setTimeout(() => line.remove(), 2500);
}
