import { defineConfig } from "vitest/config";

// jsdom is used as a plain library (documents are injected), so the
// default node environment is fine for every test file.
export default defineConfig({
  test: {
    environment: "node",
    testTimeout: 60000,
    hookTimeout: 60000,
  },
});
