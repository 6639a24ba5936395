// Minimal PCM16 WAV reader + canvas thumbnail, so slot cards can show the
// uploaded waveform without any DSP on the client.

export function decodePcm16(buffer: ArrayBuffer): Float32Array {
  const view = new DataView(buffer);
  if (view.byteLength < 44 || view.getUint32(0, false) !== 0x52494646) {
    throw new Error('not a RIFF/WAV file');
  }
  let offset = 12;
  let dataOffset = -1;
  let dataLength = 0;
  let bits = 16;
  while (offset + 8 <= view.byteLength) {
    const id = view.getUint32(offset, false);
    const size = view.getUint32(offset + 4, true);
    if (id === 0x666d7420) {
      bits = view.getUint16(offset + 22, true);
    } else if (id === 0x64617461) {
      dataOffset = offset + 8;
      dataLength = size;
      break;
    }
    offset += 8 + size + (size % 2);
  }
  if (dataOffset < 0) throw new Error('WAV has no data chunk');
  if (bits !== 16) throw new Error(`expected 16-bit PCM, got ${bits}-bit`);
  const n = Math.floor(dataLength / 2);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = view.getInt16(dataOffset + 2 * i, true) / 32768;
  }
  return out;
}

export function drawWaveform(canvas: HTMLCanvasElement, samples: Float32Array): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = '#4ea1ff';
  ctx.lineWidth = 1;
  ctx.beginPath();
  const mid = height / 2;
  const step = Math.max(1, Math.floor(samples.length / width));
  for (let x = 0; x < width; x++) {
    let lo = 1.0;
    let hi = -1.0;
    for (let i = x * step; i < Math.min((x + 1) * step, samples.length); i++) {
      const v = samples[i];
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
    if (hi < lo) break;
    ctx.moveTo(x + 0.5, mid - hi * mid);
    ctx.lineTo(x + 0.5, mid - lo * mid);
  }
  ctx.stroke();
}
