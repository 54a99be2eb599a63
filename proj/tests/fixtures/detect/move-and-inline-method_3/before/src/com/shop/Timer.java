package com.shop;

public class Timer {
    public long elapsed(long start, long end) {
        long ms = Clock.diff(start, end);
        System.out.println(ms);
        return ms;
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
