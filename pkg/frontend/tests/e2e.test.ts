// @vitest-environment node
//
// End-to-end test against a live synthesis service (node environment: the
// client code is DOM-free and jsdom's FormData cannot cross undici's fetch).
// Gated on SYNTH_API_URL; start the service with a trained checkpoint, e.g.
//   hypersynth serve --config desk.cfg --checkpoint .../final.ckpt --port 8765
// then: SYNTH_API_URL=http://127.0.0.1:8765 npm run test:e2e

import { describe, expect, it } from 'vitest';
import { ApiClient } from '../src/api.js';
import { SessionState } from '../src/state.js';
import { decodePcm16 } from '../src/waveform.js';

const BASE = process.env.SYNTH_API_URL ?? '';
const maybe = BASE ? describe : describe.skip;

/** Additive-synthesis PCM16 WAV, long enough for any analysis profile. */
function toyWav(f0: number, decay: number, seconds = 2.1, rate = 16000): Blob {
  const n = Math.floor(seconds * rate);
  const buf = new ArrayBuffer(44 + 2 * n);
  const view = new DataView(buf);
  const writeStr = (off: number, s: string) => {
    for (let i = 0; i < s.length; i++) view.setUint8(off + i, s.charCodeAt(i));
  };
  writeStr(0, 'RIFF');
  view.setUint32(4, 36 + 2 * n, true);
  writeStr(8, 'WAVE');
  writeStr(12, 'fmt ');
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true); // PCM
  view.setUint16(22, 1, true); // mono
  view.setUint32(24, rate, true);
  view.setUint32(28, rate * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  writeStr(36, 'data');
  view.setUint32(40, 2 * n, true);
  for (let i = 0; i < n; i++) {
    const t = i / rate;
    let v = 0;
    for (let k = 1; k <= 8; k++) v += Math.sin(2 * Math.PI * k * f0 * t) * k ** -decay;
    const env = Math.min(1, t / 0.01) * Math.exp(-1.5 * t);
    const s = Math.max(-1, Math.min(1, 0.6 * v * env));
    view.setInt16(44 + 2 * i, Math.round(s * 32767), true);
  }
  return new Blob([buf], { type: 'audio/wav' });
}

maybe('live service end-to-end', () => {
  const api = new ApiClient(BASE);

  it('health reports a loaded checkpoint', async () => {
    const health = await api.health();
    expect(health.status).toBe('ok');
    expect(health.checkpoint.length).toBeGreaterThan(0);
  });

  it('uploads two toy sounds, mixes at alpha 0.5, pitch 69, refine on', async () => {
    const state = new SessionState(api);
    state.setCheckpoint((await api.health()).checkpoint);
    state.addSlot(await api.uploadSlot(toyWav(261.6, 0.5), 'bright.wav'));
    state.addSlot(await api.uploadSlot(toyWav(329.6, 2.0), 'dark.wav'));
    state.moveSlider(0, 0.5);
    state.setPitch(69);
    state.refine = true;

    const { response } = await state.audition();
    expect(response.refine).toBe(true);
    expect(response.midi_pitch).toBe(69);

    // playable audio: RIFF WAV with nonzero samples
    const wavBytes = await api.fetchBytes(response.wav);
    const samples = decodePcm16(wavBytes);
    expect(samples.length).toBeGreaterThan(1000);
    let peak = 0;
    for (const s of samples) peak = Math.max(peak, Math.abs(s));
    expect(peak).toBeGreaterThan(0.05);

    // both mel previews render as PNGs
    for (const url of [response.mel_init_png, response.mel_fine_png]) {
      expect(url).toBeTruthy();
      const png = new Uint8Array(await api.fetchBytes(url as string));
      expect(Array.from(png.slice(0, 4))).toEqual([0x89, 0x50, 0x4e, 0x47]);
    }
  });

  it('client-side normalization prevents 400s from arbitrary slider input', async () => {
    const state = new SessionState(api);
    state.setCheckpoint((await api.health()).checkpoint);
    state.addSlot(await api.uploadSlot(toyWav(220.0, 0.7), 'a.wav'));
    state.addSlot(await api.uploadSlot(toyWav(440.0, 1.2), 'b.wav'));
    const hostile = [2.5, -0.3, 0.77, 0.123, 9.9];
    for (const v of hostile) {
      state.moveSlider(0, v);
      state.setPitch(60 + Math.abs(Math.round(v)) % 12);
      const { response } = await state.audition(); // throws ApiError on any 4xx
      expect(response.request_id.length).toBeGreaterThan(0);
    }
  });

  it('newer auditions cancel older ones, leaving at most one in flight', async () => {
    const state = new SessionState(api);
    state.setCheckpoint((await api.health()).checkpoint);
    state.addSlot(await api.uploadSlot(toyWav(196.0, 0.9), 'c.wav'));
    const outcomes: Array<string> = [];
    const promises = [];
    for (const pitch of [60, 64, 67]) {
      state.setPitch(pitch);
      promises.push(
        state
          .audition()
          .then(() => outcomes.push('ok'))
          .catch((e: Error) => outcomes.push(e.name)),
      );
      expect(state.hasInflight()).toBe(true);
    }
    await Promise.all(promises);
    expect(state.hasInflight()).toBe(false);
    expect(outcomes.filter((o) => o === 'ok').length).toBeGreaterThanOrEqual(1);
    expect(outcomes.filter((o) => o === 'AbortError').length).toBeGreaterThanOrEqual(1);
  });

  it('identical repeat requests come from the client cache', async () => {
    const state = new SessionState(api);
    state.setCheckpoint((await api.health()).checkpoint);
    state.addSlot(await api.uploadSlot(toyWav(293.7, 1.0), 'd.wav'));
    state.setPitch(72);
    const first = await state.audition();
    const second = await state.audition();
    expect(first.fromCache).toBe(false);
    expect(second.fromCache).toBe(true);
    expect(second.response.request_id).toBe(first.response.request_id);
  });
});
