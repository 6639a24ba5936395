// Page wiring: slot cards, mix sliders, keyboard, refine toggle, audition.

import { ApiClient, ApiError } from './api.js';
import { PianoKeyboard } from './keyboard.js';
import { noteName } from './midi.js';
import { GRANULARITY } from './normalize.js';
import { MAX_SLOTS, SessionState } from './state.js';
import { decodePcm16, drawWaveform } from './waveform.js';

const MAX_UPLOAD_BYTES = 8 * 1024 * 1024;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class App {
  readonly api: ApiClient;
  readonly state: SessionState;
  private keyboard!: PianoKeyboard;
  private auditionSeq = 0;

  constructor(base = '') {
    this.api = new ApiClient(base);
    this.state = new SessionState(this.api);
  }

  async start(): Promise<void> {
    try {
      const health = await this.api.health();
      this.state.setCheckpoint(health.checkpoint);
      this.status(`model ready (checkpoint ${health.checkpoint})`);
    } catch (err) {
      this.status(`service not ready: ${this.describe(err)}`, true);
    }

    this.keyboard = new PianoKeyboard(el('keyboard'), (midi) => {
      this.state.setPitch(midi);
      el('pitch-label').textContent = `${noteName(midi)} (MIDI ${midi})`;
      if ((el<HTMLInputElement>('auto-audition')).checked) void this.audition();
    });
    this.keyboard.select(this.state.pitch);

    el<HTMLInputElement>('file-input').addEventListener('change', (e) => {
      const input = e.target as HTMLInputElement;
      if (input.files) {
        for (const file of Array.from(input.files)) void this.upload(file);
        input.value = '';
      }
    });
    el('refine-toggle').addEventListener('change', (e) => {
      this.state.refine = (e.target as HTMLInputElement).checked;
    });
    el('audition-btn').addEventListener('click', () => void this.audition());
  }

  describe(err: unknown): string {
    if (err instanceof ApiError) return `${err.status}: ${err.message}`;
    return err instanceof Error ? err.message : String(err);
  }

  status(message: string, isError = false): void {
    const node = el('status');
    node.textContent = message;
    node.classList.toggle('error', isError);
  }

  async upload(file: File): Promise<void> {
    if (this.state.slots.length >= MAX_SLOTS) {
      this.status(`at most ${MAX_SLOTS} slots; remove one first`, true);
      return;
    }
    if (file.size > MAX_UPLOAD_BYTES) {
      this.status(`${file.name}: file exceeds ${(MAX_UPLOAD_BYTES / 1e6).toFixed(0)} MB limit`, true);
      return;
    }
    try {
      const raw = await file.arrayBuffer();
      const slot = await this.api.uploadSlot(new Blob([raw]), file.name);
      this.state.addSlot(slot);
      this.renderSlots(raw);
      this.status(`loaded ${file.name} as ${slot.slot_id}`);
    } catch (err) {
      this.status(`${file.name}: ${this.describe(err)}`, true);
    }
  }

  renderSlots(lastUploadRaw?: ArrayBuffer): void {
    const container = el('slots');
    container.innerHTML = '';
    this.state.slots.forEach((slot, idx) => {
      const card = document.createElement('div');
      card.className = 'slot-card';
      card.dataset.slotId = slot.slot_id;

      const title = document.createElement('div');
      title.className = 'slot-title';
      title.textContent = `${slot.slot_id} · ${slot.name}`;
      card.appendChild(title);

      const wave = document.createElement('canvas');
      wave.className = 'slot-wave';
      wave.width = 180;
      wave.height = 36;
      card.appendChild(wave);
      if (idx === this.state.slots.length - 1 && lastUploadRaw) {
        try {
          drawWaveform(wave, decodePcm16(lastUploadRaw));
        } catch {
          /* non-PCM16 upload: leave the canvas blank */
        }
      }

      const mel = document.createElement('img');
      mel.className = 'slot-mel';
      mel.src = this.api.url(slot.mel_png);
      mel.alt = `mel spectrogram of ${slot.name}`;
      card.appendChild(mel);

      const sliderRow = document.createElement('div');
      sliderRow.className = 'slider-row';
      const slider = document.createElement('input');
      slider.type = 'range';
      slider.min = '0';
      slider.max = '1';
      slider.step = String(GRANULARITY);
      slider.value = String(this.state.alphas[idx]);
      slider.addEventListener('input', () => {
        this.state.moveSlider(idx, parseFloat(slider.value));
        this.refreshSliderLabels();
      });
      const label = document.createElement('span');
      label.className = 'alpha-label';
      label.textContent = this.state.alphas[idx].toFixed(2);
      const lock = document.createElement('button');
      lock.className = 'lock-btn';
      lock.textContent = this.state.locked[idx] ? 'locked' : 'lock';
      lock.addEventListener('click', () => {
        this.state.toggleLock(idx);
        lock.textContent = this.state.locked[idx] ? 'locked' : 'lock';
      });
      const remove = document.createElement('button');
      remove.className = 'remove-btn';
      remove.textContent = 'remove';
      remove.addEventListener('click', () => {
        this.state.removeSlot(slot.slot_id);
        this.renderSlots();
      });
      sliderRow.append(slider, label, lock, remove);
      card.appendChild(sliderRow);
      container.appendChild(card);
    });
  }

  refreshSliderLabels(): void {
    const cards = el('slots').querySelectorAll('.slot-card');
    cards.forEach((card, idx) => {
      const slider = card.querySelector('input[type=range]') as HTMLInputElement | null;
      const label = card.querySelector('.alpha-label');
      if (slider) slider.value = String(this.state.alphas[idx]);
      if (label) label.textContent = this.state.alphas[idx].toFixed(2);
    });
  }

  async audition(): Promise<void> {
    const seq = ++this.auditionSeq;
    try {
      this.status('synthesizing…');
      const { response, fromCache } = await this.state.audition();
      if (seq !== this.auditionSeq) return; // a newer request superseded this one
      const audio = el<HTMLAudioElement>('player');
      audio.src = this.api.url(response.wav);
      void audio.play().catch(() => undefined); // autoplay may need a gesture
      el<HTMLImageElement>('mel-init').src = this.api.url(response.mel_init_png);
      const fine = el<HTMLImageElement>('mel-fine');
      if (response.mel_fine_png) {
        fine.src = this.api.url(response.mel_fine_png);
        fine.style.display = '';
      } else {
        fine.removeAttribute('src');
        fine.style.display = 'none';
      }
      this.status(fromCache ? 'served from cache' : `rendered ${response.request_id}`);
    } catch (err) {
      if (err instanceof Error && err.name === 'AbortError') return;
      if (seq === this.auditionSeq) this.status(this.describe(err), true);
    }
  }
}

declare global {
  interface Window {
    timbreApp?: App;
  }
}

if (typeof document !== 'undefined' && document.getElementById('slots')) {
  const app = new App('');
  window.timbreApp = app;
  void app.start();
}
