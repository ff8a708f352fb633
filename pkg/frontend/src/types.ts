// Wire shapes (snake_case) match labd's JSON exactly; everything the page
// computes locally uses camelCase.

export type Family = 'IPv6' | 'IPv4';

export interface Tier {
  tier_index: number;
  delay_ms: number;
  domain: string;
  v4_endpoint: [string, number];
  v6_endpoint: [string, number];
}

export interface Ladder {
  schema: number;
  run_nonce: string;
  tiers: Tier[];
}

export interface EchoBody {
  client_address: string;
  family: Family;
  tier_index: number;
  delay_ms: number;
  domain: string;
  server_timestamp_ms: number;
  run_nonce: string;
}

/** One cell of the measurement grid: a single fetch against one tier. */
export interface TierResult {
  tierIndex: number;
  delayMs: number;
  repetition: number;
  family: Family | null; // null when the cell errored
  elapsedMs: number | null;
  error: boolean;
}

export interface RunSettings {
  repetitions: number;
  cellTimeoutMs: number;
  // Fast mode runs all tiers of a repetition concurrently.  The default is
  // one fetch at a time so our own traffic cannot skew the timing under test.
  fast: boolean;
}

export const DEFAULT_SETTINGS: RunSettings = {
  repetitions: 10,
  cellTimeoutMs: 8000,
  fast: false,
};

// POST /results body and its ack.

export interface SessionEntryWire {
  tier_index: number;
  repetition: number;
  family: string;
  elapsed_ms: number | null;
}

export interface SessionRecordWire {
  session_id: string;
  opt_in: boolean;
  user_agent: string;
  platform: string;
  entries: SessionEntryWire[];
}

export interface StoreAckWire {
  session_id: string;
  stored: number;
  duplicates: number;
}

/** The slice of fetch() the page needs; tests inject their own. */
export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string; signal?: AbortSignal },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;
