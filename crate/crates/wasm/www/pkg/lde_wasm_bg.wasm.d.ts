/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_controller_free: (a: number, b: number) => void;
export const algorithms: () => [number, number];
export const bandit: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const controller_convergence: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const controller_from_bytes: (a: number, b: number) => [number, number, number];
export const controller_label: (a: number) => [number, number];
export const controller_population: (a: number) => number;
export const controller_untrained: (a: number) => [number, number, number];
export const families: () => [number, number];
export const landscape: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
