/**
 * Accuracy color gradient: the server sends an opaque scalar in [0, 1];
 * 0 renders pure red, 1 renders pure yellow, linear RGB in between.
 */

export interface RGB {
  r: number;
  g: number;
  b: number;
}

export function accuracyColor(scalar: number): RGB {
  const c = Math.min(1, Math.max(0, scalar));
  return { r: 255, g: Math.round(255 * c), b: 0 };
}

export function accuracyCss(scalar: number): string {
  const { r, g, b } = accuracyColor(scalar);
  return `rgb(${r}, ${g}, ${b})`;
}

/** Packed 0xRRGGBB, the form three.js materials take. */
export function accuracyHex(scalar: number): number {
  const { r, g, b } = accuracyColor(scalar);
  return (r << 16) | (g << 8) | b;
}
