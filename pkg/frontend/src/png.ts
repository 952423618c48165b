import zlib from "zlib";
import { ChartModel, HEIGHT, MARGIN, Pt, WIDTH } from "./chart";

const BAND_OPACITY = 0.2;

// --- tiny 5x7 bitmap font (lowercase + digits + punctuation) ----------------

const GLYPHS: Record<string, string[]> = {
  "0": ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
  "1": ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
  "2": ["01110", "10001", "00001", "00110", "01000", "10000", "11111"],
  "3": ["01110", "10001", "00001", "00110", "00001", "10001", "01110"],
  "4": ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
  "5": ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
  "6": ["01110", "10000", "10000", "11110", "10001", "10001", "01110"],
  "7": ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
  "8": ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
  "9": ["01110", "10001", "10001", "01111", "00001", "00001", "01110"],
  ".": ["00000", "00000", "00000", "00000", "00000", "01100", "01100"],
  "-": ["00000", "00000", "00000", "01110", "00000", "00000", "00000"],
  "+": ["00000", "00100", "00100", "11111", "00100", "00100", "00000"],
  "_": ["00000", "00000", "00000", "00000", "00000", "00000", "11111"],
  "(": ["00010", "00100", "01000", "01000", "01000", "00100", "00010"],
  ")": ["01000", "00100", "00010", "00010", "00010", "00100", "01000"],
  " ": ["00000", "00000", "00000", "00000", "00000", "00000", "00000"],
  a: ["00000", "00000", "01110", "00001", "01111", "10001", "01111"],
  b: ["10000", "10000", "11110", "10001", "10001", "10001", "11110"],
  c: ["00000", "00000", "01110", "10000", "10000", "10001", "01110"],
  d: ["00001", "00001", "01111", "10001", "10001", "10001", "01111"],
  e: ["00000", "00000", "01110", "10001", "11111", "10000", "01110"],
  f: ["00110", "01000", "11100", "01000", "01000", "01000", "01000"],
  g: ["00000", "01111", "10001", "10001", "01111", "00001", "01110"],
  h: ["10000", "10000", "11110", "10001", "10001", "10001", "10001"],
  i: ["00100", "00000", "01100", "00100", "00100", "00100", "01110"],
  j: ["00010", "00000", "00110", "00010", "00010", "10010", "01100"],
  k: ["10000", "10000", "10010", "10100", "11000", "10100", "10010"],
  l: ["01100", "00100", "00100", "00100", "00100", "00100", "01110"],
  m: ["00000", "00000", "11010", "10101", "10101", "10101", "10101"],
  n: ["00000", "00000", "11110", "10001", "10001", "10001", "10001"],
  o: ["00000", "00000", "01110", "10001", "10001", "10001", "01110"],
  p: ["00000", "11110", "10001", "10001", "11110", "10000", "10000"],
  q: ["00000", "01111", "10001", "10001", "01111", "00001", "00001"],
  r: ["00000", "00000", "10110", "11000", "10000", "10000", "10000"],
  s: ["00000", "00000", "01111", "10000", "01110", "00001", "11110"],
  t: ["01000", "01000", "11100", "01000", "01000", "01001", "00110"],
  u: ["00000", "00000", "10001", "10001", "10001", "10011", "01101"],
  v: ["00000", "00000", "10001", "10001", "10001", "01010", "00100"],
  w: ["00000", "00000", "10101", "10101", "10101", "10101", "01010"],
  x: ["00000", "00000", "10001", "01010", "00100", "01010", "10001"],
  y: ["00000", "10001", "10001", "10001", "01111", "00001", "01110"],
  z: ["00000", "00000", "11111", "00010", "00100", "01000", "11111"],
};

// --- raster canvas -----------------------------------------------------------

class Canvas {
  data: Uint8Array;

  constructor(public w: number, public h: number) {
    this.data = new Uint8Array(w * h * 3).fill(255);
  }

  blend(x: number, y: number, rgb: [number, number, number], alpha: number) {
    if (x < 0 || y < 0 || x >= this.w || y >= this.h) return;
    const i = (y * this.w + x) * 3;
    for (let c = 0; c < 3; c++) {
      this.data[i + c] = Math.round(alpha * rgb[c] + (1 - alpha) * this.data[i + c]);
    }
  }

  fillRect(x0: number, y0: number, x1: number, y1: number,
           rgb: [number, number, number], alpha = 1.0) {
    for (let y = Math.round(y0); y <= Math.round(y1); y++) {
      for (let x = Math.round(x0); x <= Math.round(x1); x++) {
        this.blend(x, y, rgb, alpha);
      }
    }
  }

  fillPolygon(points: Pt[], rgb: [number, number, number], alpha: number) {
    const ys = points.map((p) => p.y);
    const yMin = Math.max(0, Math.floor(Math.min(...ys)));
    const yMax = Math.min(this.h - 1, Math.ceil(Math.max(...ys)));
    for (let y = yMin; y <= yMax; y++) {
      const yc = y + 0.5;
      const xs: number[] = [];
      for (let i = 0; i < points.length; i++) {
        const a = points[i];
        const b = points[(i + 1) % points.length];
        if (a.y <= yc !== b.y <= yc) {
          xs.push(a.x + ((yc - a.y) / (b.y - a.y)) * (b.x - a.x));
        }
      }
      xs.sort((u, v) => u - v);
      for (let i = 0; i + 1 < xs.length; i += 2) {
        for (let x = Math.ceil(xs[i]); x <= Math.floor(xs[i + 1]); x++) {
          this.blend(x, y, rgb, alpha);
        }
      }
    }
  }

  line(a: Pt, b: Pt, rgb: [number, number, number], thickness = 1) {
    const steps = Math.max(1, Math.ceil(Math.hypot(b.x - a.x, b.y - a.y)));
    const r = Math.floor(thickness / 2);
    for (let s = 0; s <= steps; s++) {
      const x = Math.round(a.x + ((b.x - a.x) * s) / steps);
      const y = Math.round(a.y + ((b.y - a.y) * s) / steps);
      for (let dy = -r; dy <= r; dy++) {
        for (let dx = -r; dx <= r; dx++) {
          this.blend(x + dx, y + dy, rgb, 1.0);
        }
      }
    }
  }

  text(x: number, y: number, s: string, rgb: [number, number, number],
       anchor: "start" | "middle" | "end" = "start", vertical = false) {
    const chars = [...s.toLowerCase()];
    const width = chars.length * 6 - 1;
    let off = 0;
    if (anchor === "middle") off = -Math.floor(width / 2);
    if (anchor === "end") off = -width;
    for (const ch of chars) {
      const glyph = GLYPHS[ch];
      if (glyph) {
        for (let gy = 0; gy < 7; gy++) {
          for (let gx = 0; gx < 5; gx++) {
            if (glyph[gy][gx] === "1") {
              if (vertical) this.blend(x + gy - 7, y - off - gx, rgb, 1.0);
              else this.blend(x + off + gx, y + gy - 7, rgb, 1.0);
            }
          }
        }
      }
      off += 6;
    }
  }
}

// --- PNG encoding (8-bit RGB, filter 0) --------------------------------------

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Buffer): number {
  let c = 0xffffffff;
  for (const byte of buf) c = CRC_TABLE[(c ^ byte) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, payload: Buffer): Buffer {
  const len = Buffer.alloc(4);
  len.writeUInt32BE(payload.length);
  const body = Buffer.concat([Buffer.from(type, "ascii"), payload]);
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(body));
  return Buffer.concat([len, body, crc]);
}

export function encodePng(canvas: Canvas): Buffer {
  const { w, h, data } = canvas;
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(w, 0);
  ihdr.writeUInt32BE(h, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 2; // color type: truecolor
  const raw = Buffer.alloc(h * (1 + w * 3));
  for (let y = 0; y < h; y++) {
    raw[y * (1 + w * 3)] = 0; // filter: none
    Buffer.from(data.buffer, y * w * 3, w * 3).copy(raw, y * (1 + w * 3) + 1);
  }
  const idat = zlib.deflateSync(raw, { level: 9 });
  return Buffer.concat([
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

// --- chart rendering ----------------------------------------------------------

function hexToRgb(hex: string): [number, number, number] {
  return [
    parseInt(hex.slice(1, 3), 16),
    parseInt(hex.slice(3, 5), 16),
    parseInt(hex.slice(5, 7), 16),
  ];
}

const GRID: [number, number, number] = [221, 221, 221];
const AXIS: [number, number, number] = [51, 51, 51];

export function renderPng(chart: ChartModel): Buffer {
  const canvas = new Canvas(chart.width, chart.height);
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = MARGIN.top;
  const y1 = HEIGHT - MARGIN.bottom;

  for (const t of chart.yTicks) {
    canvas.line({ x: x0, y: t.pos }, { x: x1, y: t.pos }, GRID);
    canvas.text(x0 - 8, t.pos + 4, t.label, AXIS, "end");
  }
  for (const t of chart.xTicks) {
    canvas.line({ x: t.pos, y: y1 }, { x: t.pos, y: y1 + 5 }, AXIS);
    canvas.text(t.pos, y1 + 20, t.label, AXIS, "middle");
  }
  canvas.line({ x: x0, y: y1 }, { x: x1, y: y1 }, AXIS);
  canvas.line({ x: x0, y: y0 }, { x: x0, y: y1 }, AXIS);
  canvas.text((x0 + x1) / 2, HEIGHT - 12, chart.xLabel, AXIS, "middle");
  canvas.text(18, (y0 + y1) / 2, chart.yLabel, AXIS, "middle", true);

  for (const s of chart.series) {
    const rgb = hexToRgb(s.color);
    if (s.bandWidth > 0) canvas.fillPolygon(s.band, rgb, BAND_OPACITY);
    for (let i = 0; i + 1 < s.line.length; i++) {
      canvas.line(s.line[i], s.line[i + 1], rgb, 2);
    }
  }
  chart.series.forEach((s, i) => {
    const lx = x0 + 14;
    const ly = y0 + 16 + 20 * i;
    canvas.line({ x: lx, y: ly - 4 }, { x: lx + 26, y: ly - 4 }, hexToRgb(s.color), 2);
    canvas.text(lx + 32, ly, s.label, AXIS);
  });

  return encodePng(canvas);
}

export { Canvas };
