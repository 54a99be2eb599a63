package com.shop;

public class Timer {
    public long elapsed(long start, long end) {
        long d = end - start;
        long ms = d < 0 ? 0 : d;
        System.out.println(ms);
        return ms;
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
