/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const boundProfiles: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const boundSummary: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const stickDraw: (a: number, b: number, c: number) => [number, number, number, number];
export const toyData: (a: number, b: number) => [number, number, number, number];
export const toyFit: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const toyTruth: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
