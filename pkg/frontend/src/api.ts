import type { DecisionAction, QueueSnapshot, ReviewCard } from './types.js';

interface InstanceDoc {
  instance_id: string;
  image_ref: string;
  image_w: number;
  image_h: number;
  category: string;
  obb: number[];
  description: string;
  word_count: number;
  state: string;
  validation?: { passed: boolean; violations: { rule: string; matched_text: string }[] };
}

function toCard(doc: InstanceDoc, baseUrl: string): ReviewCard {
  return {
    instanceId: doc.instance_id,
    imageUrl: `${baseUrl}/api/images/${encodeURIComponent(doc.instance_id)}`,
    obb: doc.obb,
    category: doc.category,
    caption: doc.description,
    wordCount: doc.word_count,
    state: doc.state,
    imageW: doc.image_w,
    imageH: doc.image_h,
    validation: doc.validation ?? { passed: true, violations: [] },
  };
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson(resp: Response): Promise<any> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === 'string') detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return resp.json();
}

/** Typed client for the review service endpoints. */
export class ReviewApi {
  constructor(private baseUrl: string = '') {}

  /** Oldest pending instance, or null when the queue is empty. */
  async fetchNextPending(): Promise<ReviewCard | null> {
    const body = await asJson(
      await fetch(`${this.baseUrl}/api/instances?state=pending&limit=1`),
    );
    if (!body.instances || body.instances.length === 0) return null;
    return toCard(body.instances[0], this.baseUrl);
  }

  async fetchInstance(instanceId: string): Promise<ReviewCard> {
    const doc = await asJson(
      await fetch(`${this.baseUrl}/api/instances/${encodeURIComponent(instanceId)}`),
    );
    return toCard(doc, this.baseUrl);
  }

  /** POST one decision; resolves with the server's post-decision card. */
  async submitDecision(
    instanceId: string,
    action: DecisionAction,
    newText?: string,
    reviewer = 'ui',
  ): Promise<ReviewCard> {
    const body = await asJson(
      await fetch(`${this.baseUrl}/api/instances/${encodeURIComponent(instanceId)}/decision`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ action, new_text: newText ?? '', reviewer }),
      }),
    );
    return toCard(body.instance, this.baseUrl);
  }

  async queue(): Promise<QueueSnapshot> {
    return asJson(await fetch(`${this.baseUrl}/api/queue`));
  }

  async stats(): Promise<Record<string, unknown>> {
    return asJson(await fetch(`${this.baseUrl}/api/stats`));
  }

  async log(): Promise<Record<string, unknown>[]> {
    return asJson(await fetch(`${this.baseUrl}/api/log`));
  }
}
