import { defineConfig } from "vite";

export default defineConfig({
  // in production the Python service serves dist/ and /v1 from one origin;
  // the dev server proxies /v1 to a locally running `imgcloak serve`
  server: {
    proxy: {
      "/v1": "http://127.0.0.1:8571",
    },
  },
  test: {
    environment: "node",
  },
});
