import { ApiError, ReviewApi } from './api.js';
import type { DecisionAction, ReviewCard } from './types.js';

export type SessionState =
  | { kind: 'loading' }
  | { kind: 'card'; card: ReviewCard }
  | { kind: 'done' }
  | { kind: 'error'; message: string; card: ReviewCard | null };

/** Drives the review loop: one card at a time, one POST per user action.
 *
 * No optimistic updates: the card advances only after the server
 * acknowledges the decision, and an in-flight guard drops repeat
 * submissions (double-clicks, key repeats) while a POST is pending.
 */
export class ReviewSession {
  state: SessionState = { kind: 'loading' };
  private inFlight = false;

  constructor(private api: ReviewApi) {}

  get currentCard(): ReviewCard | null {
    if (this.state.kind === 'card') return this.state.card;
    if (this.state.kind === 'error') return this.state.card;
    return null;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  async loadNext(): Promise<SessionState> {
    try {
      const card = await this.api.fetchNextPending();
      this.state = card === null ? { kind: 'done' } : { kind: 'card', card };
    } catch (err) {
      // network failure: keep whatever card was showing, surface a banner
      this.state = { kind: 'error', message: String(err), card: this.currentCard };
    }
    return this.state;
  }

  /** Validate, submit, and advance. Returns false when the action was refused
   * locally (busy, no card, or empty revise text). */
  async decide(action: DecisionAction, newText?: string): Promise<boolean> {
    const card = this.currentCard;
    if (this.inFlight || card === null) return false;
    if (action === 'revise' && !(newText ?? '').trim()) return false;
    this.inFlight = true;
    try {
      await this.api.submitDecision(card.instanceId, action, newText);
      await this.loadNext();
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale card: refresh from server state
        try {
          const fresh = await this.api.fetchInstance(card.instanceId);
          this.state =
            fresh.state === 'pending'
              ? { kind: 'card', card: fresh }
              : await this.loadNext();
        } catch (refreshErr) {
          this.state = { kind: 'error', message: String(refreshErr), card };
        }
        return false;
      }
      this.state = { kind: 'error', message: String(err), card };
      return false;
    } finally {
      this.inFlight = false;
    }
  }
}
