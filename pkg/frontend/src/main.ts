import { ReviewApi } from './api.js';
import { drawObbOverlay } from './overlay.js';
import { ReviewSession } from './session.js';
import type { DecisionAction, ReviewCard } from './types.js';

const api = new ReviewApi('');
const session = new ReviewSession(api);

const el = {
  stage: document.getElementById('stage') as HTMLDivElement,
  canvas: document.getElementById('overlay') as HTMLCanvasElement,
  image: document.getElementById('photo') as HTMLImageElement,
  caption: document.getElementById('caption') as HTMLTextAreaElement,
  meta: document.getElementById('meta') as HTMLDivElement,
  flags: document.getElementById('flags') as HTMLDivElement,
  banner: document.getElementById('banner') as HTMLDivElement,
  done: document.getElementById('done') as HTMLDivElement,
  card: document.getElementById('card') as HTMLDivElement,
  zoomLabel: document.getElementById('zoom-label') as HTMLSpanElement,
};

let zoom = 1;

function setBanner(message: string | null) {
  el.banner.textContent = message ?? '';
  el.banner.style.display = message ? 'block' : 'none';
}

function renderCard(card: ReviewCard) {
  el.done.style.display = 'none';
  el.card.style.display = 'flex';
  el.meta.textContent =
    `${card.instanceId} - ${card.category} - ${card.wordCount} words - state: ${card.state}`;
  const notes = card.validation.violations.map((v) => `${v.rule}: "${v.matched_text}"`);
  el.flags.textContent = card.validation.passed ? 'validation: ok' : `validation: ${notes.join('; ')}`;
  el.flags.className = card.validation.passed ? 'ok' : 'bad';
  if (el.caption.value !== card.caption) el.caption.value = card.caption;
  el.image.onload = () => drawOverlay(card);
  // cache-bust regenerated images while keeping the URL stable for the API
  el.image.src = `${card.imageUrl}?v=${encodeURIComponent(card.caption.length.toString())}`;
  if (el.image.complete) drawOverlay(card);
}

function drawOverlay(card: ReviewCard) {
  const w = card.imageW * zoom;
  const h = card.imageH * zoom;
  el.canvas.width = w;
  el.canvas.height = h;
  el.image.style.width = `${w}px`;
  el.image.style.height = `${h}px`;
  el.zoomLabel.textContent = `${zoom}x`;
  const ctx = el.canvas.getContext('2d');
  if (!ctx) return;
  ctx.clearRect(0, 0, w, h);
  drawObbOverlay(ctx, card.obb, zoom);
}

function render() {
  const state = session.state;
  if (state.kind === 'done') {
    setBanner(null);
    el.card.style.display = 'none';
    el.done.style.display = 'block';
    return;
  }
  if (state.kind === 'error') {
    setBanner(`${state.message} - retrying may help`);
    if (state.card) renderCard(state.card);
    return;
  }
  if (state.kind === 'card') {
    setBanner(null);
    renderCard(state.card);
  }
}

async function act(action: DecisionAction) {
  const card = session.currentCard;
  if (!card) return;
  const newText = action === 'revise' ? el.caption.value : undefined;
  if (action === 'revise' && !(newText ?? '').trim()) {
    setBanner('revise needs non-empty text');
    return;
  }
  if (action === 'regenerate') {
    el.meta.textContent = `${card.instanceId} - regenerating...`;
  }
  await session.decide(action, newText);
  render();
}

function bind() {
  for (const [id, action] of [
    ['btn-accept', 'accept'],
    ['btn-revise', 'revise'],
    ['btn-regenerate', 'regenerate'],
    ['btn-discard', 'discard'],
  ] as [string, DecisionAction][]) {
    document.getElementById(id)?.addEventListener('click', () => void act(action));
  }
  document.getElementById('btn-retry')?.addEventListener('click', async () => {
    await session.loadNext();
    render();
  });
  document.getElementById('btn-zoom')?.addEventListener('click', () => {
    zoom = zoom === 1 ? 2 : 1;
    const card = session.currentCard;
    if (card) drawOverlay(card);
    el.zoomLabel.textContent = `${zoom}x`;
  });
  document.addEventListener('keydown', (ev) => {
    if (ev.target === el.caption) return; // typing a revision
    const key = ev.key.toLowerCase();
    const map: Record<string, DecisionAction> = {
      a: 'accept',
      r: 'revise',
      g: 'regenerate',
      d: 'discard',
    };
    if (key in map) {
      ev.preventDefault();
      void act(map[key]);
    }
  });
}

async function start() {
  bind();
  await session.loadNext();
  render();
}

void start();
