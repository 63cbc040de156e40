/** Hash-routed single-page app wiring the four pages to the API. */

import { Api } from "./api.js";
import { clear, el } from "./dom.js";
import { AnnotationPage } from "./pages/annotation.js";
import { ResultsPage } from "./pages/results.js";
import { ReviewPage } from "./pages/review.js";

const ROUTES = [
  ["#/annotation", "Annotation"],
  ["#/results", "Model Results"],
  ["#/errors", "Errors"],
  ["#/uncertain", "Uncertain"],
] as const;

export function createApp(root: HTMLElement, api: Api = new Api()) {
  const nav = el("nav", { class: "nav-bar" });
  for (const [hash, title] of ROUTES) {
    nav.append(el("a", { href: hash }, [title]));
  }
  const outlet = el("main", { id: "outlet" });
  root.append(nav, outlet);

  let current: AnnotationPage | ResultsPage | ReviewPage | null = null;

  async function route(): Promise<void> {
    if (current instanceof AnnotationPage) current.unmount();
    clear(outlet);
    const hash = window.location.hash || "#/annotation";
    if (hash === "#/results") {
      const page = new ResultsPage(api);
      current = page;
      await page.mount(outlet);
    } else if (hash === "#/errors") {
      const page = new ReviewPage(api, "errors");
      current = page;
      await page.mount(outlet);
    } else if (hash === "#/uncertain") {
      const page = new ReviewPage(api, "uncertain");
      current = page;
      await page.mount(outlet);
    } else {
      const page = new AnnotationPage(api);
      current = page;
      await page.mount(outlet);
    }
    for (const link of nav.querySelectorAll("a")) {
      link.classList.toggle("active", link.getAttribute("href") === hash);
    }
  }

  window.addEventListener("hashchange", () => void route());
  void route();
  return { route };
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  createApp(document.getElementById("app") as HTMLElement);
}
