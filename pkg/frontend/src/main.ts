import { ApiClient } from "./api.js";
import { ConsoleApp } from "./app.js";

// Base URL comes from ?api=... so the console can point at a gateway on
// another port; default is same-origin.
const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const client = new ApiClient(baseUrl, window.fetch.bind(window));
const app = new ConsoleApp({ client, document, root });
void app.start();
