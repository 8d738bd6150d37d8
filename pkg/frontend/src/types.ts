export type DecisionAction = 'accept' | 'revise' | 'regenerate' | 'discard';

export interface ValidationInfo {
  passed: boolean;
  violations: { rule: string; matched_text: string }[];
}

/** Client-side view model for one instance under review. */
export interface ReviewCard {
  instanceId: string;
  imageUrl: string;
  /** 8 numbers: x1,y1,x2,y2,x3,y3,x4,y4 in the served image's pixel frame. */
  obb: number[];
  category: string;
  caption: string;
  wordCount: number;
  state: string;
  imageW: number;
  imageH: number;
  validation: ValidationInfo;
}

export interface QueueSnapshot {
  pending: string[];
  accepted: string[];
  discarded: string[];
  regenerate: string[];
}
