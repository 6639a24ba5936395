// Typed client for the synthesis service. All model access goes through
// these endpoints; the UI never touches files or model state directly.

export interface SlotInfo {
  slot_id: string;
  name: string;
  feature_preview: number[];
  mel_png: string;
}

export interface SynthesizeRequest {
  slot_ids: string[];
  alphas: number[];
  midi_pitch: number;
  refine: boolean;
  checkpoint_hash?: string;
}

export interface SynthesizeResponse {
  request_id: string;
  wav: string;
  mel_init_png: string;
  mel_fine_png: string | null;
  midi_pitch: number;
  refine: boolean;
  checkpoint: string;
}

export interface HealthInfo {
  status: string;
  checkpoint: string;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let detail = `HTTP ${res.status}`;
  try {
    const body = await res.json();
    if (body && typeof body.detail === 'string') detail = body.detail;
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(res.status, detail);
}

export class ApiClient {
  constructor(private base: string = '', private fetchFn: typeof fetch = fetch) {}

  url(path: string): string {
    return `${this.base}${path}`;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.url(path), init);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.json<HealthInfo>('/health');
  }

  config(): Promise<Record<string, unknown>> {
    return this.json('/config');
  }

  async uploadSlot(file: Blob, name: string): Promise<SlotInfo> {
    const form = new FormData();
    form.append('file', file, name);
    return this.json<SlotInfo>('/slots', { method: 'POST', body: form });
  }

  listSlots(): Promise<{ slots: SlotInfo[] }> {
    return this.json('/slots');
  }

  synthesize(req: SynthesizeRequest, signal?: AbortSignal): Promise<SynthesizeResponse> {
    return this.json<SynthesizeResponse>('/synthesize', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(req),
      signal,
    });
  }

  async fetchBytes(path: string, signal?: AbortSignal): Promise<ArrayBuffer> {
    const res = await this.fetchFn(this.url(path), { signal });
    if (!res.ok) throw await parseError(res);
    return res.arrayBuffer();
  }
}
