import { describe, expect, it, vi } from 'vitest';
import { ApiClient, ApiError } from '../src/api.js';

describe('api client', () => {
  it('surfaces service error details', async () => {
    const fetchFn = vi.fn(async () =>
      new Response(JSON.stringify({ detail: 'weights must sum to 1 (got 1.40000000)' }), { status: 400 }),
    );
    const api = new ApiClient('', fetchFn as unknown as typeof fetch);
    const err = await api
      .synthesize({ slot_ids: ['s1'], alphas: [0.7, 0.7], midi_pitch: 69, refine: true })
      .catch((e: ApiError) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(400);
    expect((err as ApiError).message).toMatch(/sum to 1/);
  });

  it('falls back to the HTTP status for non-JSON errors', async () => {
    const fetchFn = vi.fn(async () => new Response('boom', { status: 500 }));
    const api = new ApiClient('', fetchFn as unknown as typeof fetch);
    const err = await api.health().catch((e: ApiError) => e);
    expect((err as ApiError).message).toBe('HTTP 500');
  });

  it('uploads multipart form data', async () => {
    let seenBody: FormData | null = null;
    const fetchFn = vi.fn(async (_url: RequestInfo | URL, init?: RequestInit) => {
      seenBody = init?.body as FormData;
      return new Response(
        JSON.stringify({ slot_id: 's1', name: 'x.wav', feature_preview: [], mel_png: '/image/slot_s1.png' }),
        { status: 200 },
      );
    });
    const api = new ApiClient('', fetchFn as unknown as typeof fetch);
    const slot = await api.uploadSlot(new Blob([new Uint8Array(8)]), 'x.wav');
    expect(slot.slot_id).toBe('s1');
    expect(seenBody).toBeInstanceOf(FormData);
    expect((seenBody as unknown as FormData).get('file')).toBeTruthy();
  });

  it('prefixes a base URL', () => {
    const api = new ApiClient('http://localhost:9999');
    expect(api.url('/health')).toBe('http://localhost:9999/health');
  });
});
