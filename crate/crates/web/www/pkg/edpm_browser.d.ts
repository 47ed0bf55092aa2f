/* tslint:disable */
/* eslint-disable */

export function boundProfiles(n: number, trunc_n: number, trunc_m: number, alpha_theta: number, alpha_psi: number, max_n: number, max_m: number): Float64Array;

export function boundSummary(n: number, trunc_n: number, trunc_m: number, alpha_theta: number, alpha_psi: number, eps: number): Float64Array;

export function stickDraw(alpha: number, len: number, seed: number): Float64Array;

export function toyData(n: number, seed: number): Float64Array;

export function toyFit(data: Float64Array, iterations: number, burn_in: number, trunc_n: number, trunc_m: number, seed: number, points: number): Float64Array;

export function toyTruth(points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly boundProfiles: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly boundSummary: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly stickDraw: (a: number, b: number, c: number) => [number, number, number, number];
    readonly toyData: (a: number, b: number) => [number, number, number, number];
    readonly toyFit: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly toyTruth: (a: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
