import { SessionApi } from "./api.js";
import { LabelConsole } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "";
const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app element");
}
const console_ = new LabelConsole(root, new SessionApi(base));
void console_.start();
