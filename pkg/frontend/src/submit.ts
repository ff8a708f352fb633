// Opt-in result submission.  The opt_in gate lives here, client side: with
// opt-in unchecked this module never touches the network at all.

import type { FetchLike, SessionRecordWire, StoreAckWire, TierResult } from './types';

export function buildSession(
  results: TierResult[],
  sessionId: string,
  optIn: boolean,
  userAgent = '',
  platform = '',
): SessionRecordWire {
  return {
    session_id: sessionId,
    opt_in: optIn,
    user_agent: userAgent,
    platform,
    entries: results
      .filter((r) => !r.error && r.family !== null)
      .map((r) => ({
        tier_index: r.tierIndex,
        repetition: r.repetition,
        family: r.family as string,
        elapsed_ms: r.elapsedMs,
      })),
  };
}

export interface SubmitStatus {
  attempted: boolean;
  ok: boolean;
  stored: number;
  duplicates: number;
  message: string;
}

export async function submitResults(
  baseUrl: string,
  session: SessionRecordWire,
  fetchFn: FetchLike,
): Promise<SubmitStatus> {
  if (!session.opt_in) {
    return {
      attempted: false,
      ok: true,
      stored: 0,
      duplicates: 0,
      message: 'results kept locally (opt-in is off)',
    };
  }
  try {
    const resp = await fetchFn(`${baseUrl}/results`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(session),
    });
    if (!resp.ok) {
      return {
        attempted: true,
        ok: false,
        stored: 0,
        duplicates: 0,
        message: `server declined (status ${resp.status})`,
      };
    }
    const ack = (await resp.json()) as StoreAckWire;
    return {
      attempted: true,
      ok: true,
      stored: ack.stored,
      duplicates: ack.duplicates,
      message: `stored ${ack.stored}, ${ack.duplicates} duplicates`,
    };
  } catch {
    return {
      attempted: true,
      ok: false,
      stored: 0,
      duplicates: 0,
      message: 'network failure; results retained locally, try again',
    };
  }
}
