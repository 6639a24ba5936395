// Single-page session state: sound slots, mix weights, pitch, refine toggle,
// a response cache keyed by (request, checkpoint) and single-in-flight
// audition handling where newer requests cancel older ones.

import { ApiClient, SlotInfo, SynthesizeResponse } from './api.js';
import { MIDI_MAX, MIDI_MIN, clampToRange } from './midi.js';
import { alphasSumToOne, equalAlphas, normalizeAlphas, redistribute } from './normalize.js';

export const MAX_SLOTS = 4;

export interface AuditionResult {
  response: SynthesizeResponse;
  fromCache: boolean;
}

export class SessionState {
  slots: SlotInfo[] = [];
  alphas: number[] = [];
  locked: boolean[] = [];
  pitch = 69; // A4
  refine = true;
  checkpointHash = '';

  private cache = new Map<string, SynthesizeResponse>();
  private inflight: AbortController | null = null;

  constructor(private api: ApiClient) {}

  setCheckpoint(hash: string): void {
    this.checkpointHash = hash; // cache keys embed the hash, so old entries go stale
  }

  addSlot(slot: SlotInfo): void {
    if (this.slots.length >= MAX_SLOTS) {
      throw new Error(`at most ${MAX_SLOTS} sound slots`);
    }
    this.slots.push(slot);
    this.locked.push(false);
    this.alphas = equalAlphas(this.slots.length);
  }

  removeSlot(slotId: string): void {
    const idx = this.slots.findIndex((s) => s.slot_id === slotId);
    if (idx < 0) return;
    this.slots.splice(idx, 1);
    this.locked.splice(idx, 1);
    this.alphas = equalAlphas(this.slots.length);
  }

  moveSlider(idx: number, value: number): void {
    this.alphas = redistribute(this.alphas, idx, value, this.locked);
  }

  toggleLock(idx: number): void {
    this.locked[idx] = !this.locked[idx];
  }

  setPitch(midi: number): void {
    if (midi < MIDI_MIN || midi > MIDI_MAX) throw new Error(`pitch ${midi} out of range`);
    this.pitch = midi;
  }

  stepPitch(delta: number): void {
    this.pitch = clampToRange(this.pitch + delta);
  }

  /** Client-side contract guard: weights always leave here summing to 1. */
  outgoingAlphas(): number[] {
    const alphas = alphasSumToOne(this.alphas) ? this.alphas : normalizeAlphas(this.alphas, this.locked);
    if (!alphasSumToOne(alphas)) throw new Error('weight normalization failed');
    return alphas;
  }

  requestKey(alphas: number[]): string {
    return JSON.stringify({
      a: alphas.map((v) => v.toFixed(4)),
      c: this.checkpointHash,
      p: this.pitch,
      r: this.refine,
      s: this.slots.map((s) => s.slot_id),
    });
  }

  hasInflight(): boolean {
    return this.inflight !== null;
  }

  cancelInflight(): void {
    if (this.inflight) {
      this.inflight.abort();
      this.inflight = null;
    }
  }

  /**
   * Synthesize the current mix. Identical repeated requests are served from
   * the cache; a newer audition aborts any older one still in flight.
   */
  async audition(): Promise<AuditionResult> {
    if (this.slots.length === 0) throw new Error('load a sound first');
    const alphas = this.outgoingAlphas();
    const key = this.requestKey(alphas);
    const cached = this.cache.get(key);
    if (cached) return { response: cached, fromCache: true };

    this.cancelInflight();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const response = await this.api.synthesize(
        {
          slot_ids: this.slots.map((s) => s.slot_id),
          alphas,
          midi_pitch: this.pitch,
          refine: this.refine,
          checkpoint_hash: this.checkpointHash || undefined,
        },
        controller.signal,
      );
      this.cache.set(key, response);
      return { response, fromCache: false };
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }
}
