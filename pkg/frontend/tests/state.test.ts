import { beforeEach, describe, expect, it, vi } from 'vitest';
import { ApiClient, SlotInfo, SynthesizeRequest } from '../src/api.js';
import { SessionState } from '../src/state.js';

function slot(id: string): SlotInfo {
  return { slot_id: id, name: `${id}.wav`, feature_preview: [0.1], mel_png: `/image/slot_${id}.png` };
}

interface Call {
  body: SynthesizeRequest;
  resolve: (value: Response) => void;
  reject: (err: Error) => void;
  signal: AbortSignal | null;
}

function makeHarness(autoRespond = true) {
  const calls: Call[] = [];
  const fetchFn = vi.fn(async (url: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const body = JSON.parse(String(init?.body)) as SynthesizeRequest;
    const signal = init?.signal ?? null;
    return new Promise<Response>((resolve, reject) => {
      const call: Call = { body, resolve, reject, signal };
      calls.push(call);
      const respond = () =>
        resolve(
          new Response(
            JSON.stringify({
              request_id: `r${calls.length}`,
              wav: `/audio/r${calls.length}.wav`,
              mel_init_png: `/image/r${calls.length}_init.png`,
              mel_fine_png: body.refine ? `/image/r${calls.length}_fine.png` : null,
              midi_pitch: body.midi_pitch,
              refine: body.refine,
              checkpoint: 'ck1',
            }),
            { status: 200, headers: { 'Content-Type': 'application/json' } },
          ),
        );
      if (signal) {
        signal.addEventListener('abort', () => {
          const err = new Error('aborted');
          err.name = 'AbortError';
          reject(err);
        });
      }
      if (autoRespond) respond();
      else (call as Call & { respond?: () => void }).respond = respond;
    });
  });
  const api = new ApiClient('', fetchFn as unknown as typeof fetch);
  const state = new SessionState(api);
  state.setCheckpoint('ck1');
  return { state, fetchFn, calls };
}

describe('session state', () => {
  let harness: ReturnType<typeof makeHarness>;
  beforeEach(() => {
    harness = makeHarness();
  });

  it('limits slots to four and keeps alphas on the simplex', () => {
    const { state } = harness;
    for (let i = 0; i < 4; i++) state.addSlot(slot(`s${i}`));
    expect(() => state.addSlot(slot('s5'))).toThrow(/at most/);
    expect(Math.abs(state.alphas.reduce((a, b) => a + b, 0) - 1)).toBeLessThan(1e-9);
    state.removeSlot('s1');
    expect(state.slots).toHaveLength(3);
    expect(Math.abs(state.alphas.reduce((a, b) => a + b, 0) - 1)).toBeLessThan(1e-9);
  });

  it('never sends alphas violating the service contract', async () => {
    const { state, calls } = harness;
    state.addSlot(slot('a'));
    state.addSlot(slot('b'));
    // simulate hostile slider state that bypassed moveSlider
    state.alphas = [0.7, 0.7];
    await state.audition();
    const sent = calls[0].body.alphas;
    expect(Math.abs(sent.reduce((x, y) => x + y, 0) - 1)).toBeLessThanOrEqual(1e-6);
  });

  it('pitch is validated and steppable by semitones', () => {
    const { state } = harness;
    state.setPitch(69);
    expect(() => state.setPitch(109)).toThrow();
    state.stepPitch(+1);
    expect(state.pitch).toBe(70);
    state.pitch = 108;
    state.stepPitch(+1);
    expect(state.pitch).toBe(108); // clamped at the top of the range
  });

  it('serves repeated identical requests from the cache', async () => {
    const { state, fetchFn } = harness;
    state.addSlot(slot('a'));
    const first = await state.audition();
    expect(first.fromCache).toBe(false);
    const second = await state.audition();
    expect(second.fromCache).toBe(true);
    expect(second.response.request_id).toBe(first.response.request_id);
    expect(fetchFn).toHaveBeenCalledTimes(1);
  });

  it('cache keys include the checkpoint hash', async () => {
    const { state, fetchFn } = harness;
    state.addSlot(slot('a'));
    await state.audition();
    state.setCheckpoint('ck2'); // model swapped: cached result must go stale
    await state.audition();
    expect(fetchFn).toHaveBeenCalledTimes(2);
  });

  it('a newer audition cancels the in-flight one', async () => {
    const { state, calls } = makeHarness(false);
    state.addSlot(slot('a'));
    const p1 = state.audition();
    expect(state.hasInflight()).toBe(true);
    state.setPitch(70); // different request
    const p2 = state.audition();
    await expect(p1).rejects.toMatchObject({ name: 'AbortError' });
    expect(calls[0].signal?.aborted).toBe(true);
    (calls[1] as unknown as { respond: () => void }).respond();
    const result = await p2;
    expect(result.response.midi_pitch).toBe(70);
    expect(state.hasInflight()).toBe(false);
  });

  it('at most one request is in flight', async () => {
    const { state, calls } = makeHarness(false);
    state.addSlot(slot('a'));
    const promises = [];
    for (const pitch of [60, 61, 62, 63]) {
      state.setPitch(pitch);
      promises.push(state.audition().catch((e: Error) => e));
    }
    const live = calls.filter((c) => !c.signal?.aborted);
    expect(live).toHaveLength(1);
    (live[0] as unknown as { respond: () => void }).respond();
    const results = await Promise.all(promises);
    const ok = results.filter((r) => !(r instanceof Error));
    expect(ok).toHaveLength(1);
  });

  it('audition without slots fails with a friendly error', async () => {
    const { state } = harness;
    await expect(state.audition()).rejects.toThrow(/load a sound/);
  });
});
