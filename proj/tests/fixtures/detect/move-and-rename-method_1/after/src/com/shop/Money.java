package com.shop;

public class Money {
    static String format(int cents) {
        int whole = cents / 100;
        int part = cents % 100;
        return whole + "." + part;
    }
}
