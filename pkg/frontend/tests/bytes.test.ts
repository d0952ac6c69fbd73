import { describe, expect, it } from "vitest";

import { base64ToBytes, bytesToBase64, sha256Hex } from "../src/bytes";

describe("byte pass-through", () => {
  it("base64 roundtrip is the identity on arbitrary bytes", () => {
    const bytes = new Uint8Array(256);
    for (let i = 0; i < 256; i++) bytes[i] = i;
    expect(base64ToBytes(bytesToBase64(bytes))).toEqual(bytes);
  });

  it("decoding preserves a PNG signature exactly", () => {
    const signature = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
    const decoded = base64ToBytes(bytesToBase64(signature));
    expect([...decoded]).toEqual([...signature]);
  });

  it("checksum equality certifies unmodified bytes", async () => {
    const payload = new TextEncoder().encode("backend png bytes stand-in");
    const b64 = bytesToBase64(payload);
    // what the UI displays is decoded from the transport encoding only
    const displayed = base64ToBytes(b64);
    expect(await sha256Hex(displayed)).toBe(await sha256Hex(payload));
  });

  it("checksum detects any mutation", async () => {
    const payload = new TextEncoder().encode("backend png bytes stand-in");
    const tampered = payload.slice();
    tampered[0] ^= 1;
    expect(await sha256Hex(tampered)).not.toBe(await sha256Hex(payload));
  });

  it("matches a known sha256 vector", async () => {
    const empty = await sha256Hex(new Uint8Array(0));
    expect(empty).toBe("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  });
});
