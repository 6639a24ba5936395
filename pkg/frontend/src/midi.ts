// MIDI <-> note-name mapping. Convention: A4 = 69, C4 = 60.

export const MIDI_MIN = 21;
export const MIDI_MAX = 108;

const NAMES = ['C', 'C#', 'D', 'D#', 'E', 'F', 'F#', 'G', 'G#', 'A', 'A#', 'B'];
const BLACK = new Set([1, 3, 6, 8, 10]);

export function noteName(midi: number): string {
  if (!Number.isInteger(midi) || midi < 0 || midi > 127) {
    throw new Error(`invalid MIDI note ${midi}`);
  }
  const octave = Math.floor(midi / 12) - 1;
  return `${NAMES[midi % 12]}${octave}`;
}

export function midiFromName(name: string): number {
  const m = /^([A-G]#?)(-?\d+)$/.exec(name.trim());
  if (!m) throw new Error(`invalid note name ${name}`);
  const idx = NAMES.indexOf(m[1]);
  if (idx < 0) throw new Error(`invalid note name ${name}`);
  return (parseInt(m[2], 10) + 1) * 12 + idx;
}

export function isBlackKey(midi: number): boolean {
  return BLACK.has(((midi % 12) + 12) % 12);
}

export function inPlayableRange(midi: number): boolean {
  return midi >= MIDI_MIN && midi <= MIDI_MAX;
}

export function clampToRange(midi: number): number {
  return Math.min(MIDI_MAX, Math.max(MIDI_MIN, midi));
}
