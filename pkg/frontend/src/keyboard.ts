// Piano keyboard component: full octaves around the playable range, with
// keys outside MIDI 21..108 rendered but disabled. Arrow keys move by a
// semitone, Shift+arrow by an octave.

import { MIDI_MAX, MIDI_MIN, inPlayableRange, isBlackKey, noteName } from './midi.js';

const RENDER_MIN = 12; // C0
const RENDER_MAX = 119; // B8

export class PianoKeyboard {
  private keys = new Map<number, HTMLElement>();
  private selected: number | null = null;

  constructor(
    private container: HTMLElement,
    private onSelect: (midi: number) => void,
  ) {
    this.render();
    this.container.tabIndex = 0;
    this.container.addEventListener('keydown', (e) => this.onKeyDown(e));
  }

  private render(): void {
    this.container.innerHTML = '';
    this.container.classList.add('piano');
    let whiteIndex = 0;
    const whiteCount = this.countWhite();
    for (let midi = RENDER_MIN; midi <= RENDER_MAX; midi++) {
      const key = document.createElement('button');
      key.dataset.midi = String(midi);
      key.title = `${noteName(midi)} (${midi})`;
      const black = isBlackKey(midi);
      key.className = black ? 'piano-key black' : 'piano-key white';
      const w = 100 / whiteCount;
      if (black) {
        key.style.left = `${(whiteIndex - 0.3) * w}%`;
        key.style.width = `${w * 0.62}%`;
      } else {
        key.style.left = `${whiteIndex * w}%`;
        key.style.width = `${w}%`;
        whiteIndex += 1;
      }
      if (!inPlayableRange(midi)) {
        key.disabled = true;
        key.classList.add('out-of-range');
      } else {
        key.addEventListener('mousedown', (e) => {
          e.preventDefault();
          this.select(midi);
        });
      }
      this.keys.set(midi, key);
      this.container.appendChild(key);
    }
  }

  private countWhite(): number {
    let n = 0;
    for (let m = RENDER_MIN; m <= RENDER_MAX; m++) if (!isBlackKey(m)) n += 1;
    return n;
  }

  private onKeyDown(e: KeyboardEvent): void {
    if (this.selected === null) return;
    const step = e.shiftKey ? 12 : 1;
    if (e.key === 'ArrowRight' || e.key === 'ArrowUp') {
      e.preventDefault();
      this.select(Math.min(MIDI_MAX, this.selected + step));
    } else if (e.key === 'ArrowLeft' || e.key === 'ArrowDown') {
      e.preventDefault();
      this.select(Math.max(MIDI_MIN, this.selected - step));
    }
  }

  select(midi: number): void {
    if (!inPlayableRange(midi)) return;
    if (this.selected !== null) {
      this.keys.get(this.selected)?.classList.remove('selected');
    }
    this.selected = midi;
    this.keys.get(midi)?.classList.add('selected');
    this.onSelect(midi);
  }

  get selectedMidi(): number | null {
    return this.selected;
  }
}
