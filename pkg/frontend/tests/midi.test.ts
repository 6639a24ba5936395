import { describe, expect, it } from 'vitest';
import {
  MIDI_MAX,
  MIDI_MIN,
  clampToRange,
  inPlayableRange,
  isBlackKey,
  midiFromName,
  noteName,
} from '../src/midi.js';

describe('midi note names', () => {
  it('maps A4 to 69 and C4 to 60', () => {
    expect(noteName(69)).toBe('A4');
    expect(noteName(60)).toBe('C4');
    expect(midiFromName('A4')).toBe(69);
    expect(midiFromName('C4')).toBe(60);
  });

  it('covers the playable range round-trip', () => {
    for (let midi = MIDI_MIN; midi <= MIDI_MAX; midi++) {
      expect(midiFromName(noteName(midi))).toBe(midi);
    }
  });

  it('names the range endpoints', () => {
    expect(noteName(MIDI_MIN)).toBe('A0');
    expect(noteName(MIDI_MAX)).toBe('C8');
  });

  it('rejects invalid names and notes', () => {
    expect(() => midiFromName('H3')).toThrow();
    expect(() => midiFromName('A')).toThrow();
    expect(() => noteName(-1)).toThrow();
    expect(() => noteName(200)).toThrow();
  });

  it('knows black keys', () => {
    expect(isBlackKey(61)).toBe(true); // C#4
    expect(isBlackKey(60)).toBe(false);
    expect(isBlackKey(70)).toBe(true); // A#4
  });

  it('range helpers', () => {
    expect(inPlayableRange(21)).toBe(true);
    expect(inPlayableRange(20)).toBe(false);
    expect(inPlayableRange(108)).toBe(true);
    expect(inPlayableRange(109)).toBe(false);
    expect(clampToRange(5)).toBe(21);
    expect(clampToRange(120)).toBe(108);
    expect(clampToRange(50)).toBe(50);
  });
});
